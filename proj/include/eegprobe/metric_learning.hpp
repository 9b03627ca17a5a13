#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "eegprobe/encoder.hpp"
#include "eegprobe/montage.hpp"
#include "eegprobe/signal_io.hpp"
#include "eegprobe/tensor.hpp"

namespace eegprobe {

struct TrainConfig {
  double margin = 0.2;
  double ms_epsilon = 0.1;
  double lr = 3e-4;
  double weight_decay = 1e-4;
  int epochs = 100;     // desk-scale default
  int batch_size = 64;  // class-balanced sampling
  std::uint64_t seed = 0;
  std::string label_mode = "video";  // or "emotion"

  void validate() const;
  static TrainConfig from_json_text(const std::string& text);
  std::string to_json_text() const;
};

struct Triplet {
  std::size_t anchor;
  std::size_t positive;
  std::size_t negative;
};
using TripletBatch = std::vector<Triplet>;

// Mean over triples of max(0, |a-p|^2 - |a-n|^2 + margin). An empty triple
// set is defined as loss 0 (with a warning) and is detached from the tape.
ad::Tensor triplet_loss(ad::Tape& tape, const ad::Tensor& embeddings,
                        const TripletBatch& triples, double margin,
                        std::vector<std::string>* warnings = nullptr);

// Multi-similarity mining on unit-norm rows (cosine similarity = dot).
// Per anchor: positives with s(a,p) < max_neg + epsilon, negatives with
// s(a,n) > min_pos - epsilon, crossed and capped hardest-first.
TripletBatch mine_multisimilarity(const double* embeddings, std::size_t n,
                                  std::size_t dim, const std::vector<int>& labels,
                                  double epsilon, std::size_t cap_per_anchor = 20);

struct AdamState {
  struct Slot {
    std::vector<double> m;
    std::vector<double> v;
  };
  std::vector<Slot> slots;
  long step = 0;
};

// Standard Adam with bias correction; weight decay is the classic coupled
// variant (added to the gradient before the moment updates).
void adam_step(std::vector<std::pair<std::string, ad::Tensor*>> params,
               AdamState& state, double lr, double beta1 = 0.9, double beta2 = 0.999,
               double eps = 1e-8, double weight_decay = 0.0);

struct EpochStats {
  int epoch = 0;
  double mean_loss = 0.0;
  double val_accuracy = 0.0;  // NaN when the val split is empty
  int skipped_batches = 0;
};

struct TrainResult {
  EncoderParams params;
  EncoderConfig encoder_config;
  std::vector<EpochStats> history;
  int best_epoch = -1;  // -1 when no val split: final params returned
};

// Region selection, class-balanced batches, encode -> mine -> loss ->
// backward -> adam per batch; returns the parameters with the best val
// k-means accuracy (final parameters when the val split is empty).
TrainResult train(const SegmentSet& segments, const Montage& montage,
                  const std::string& region_key, const TrainConfig& config,
                  EncoderConfig encoder_config);

std::string history_to_csv(const std::vector<EpochStats>& history);

}  // namespace eegprobe
