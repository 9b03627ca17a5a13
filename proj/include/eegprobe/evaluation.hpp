#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "eegprobe/encoder.hpp"
#include "eegprobe/montage.hpp"
#include "eegprobe/signal_io.hpp"

namespace eegprobe {

struct TrainConfig;

struct KMeansResult {
  std::vector<std::size_t> assignments;
  std::vector<double> centroids;  // k x dim
  double inertia = 0.0;
  std::vector<double> inertia_trace;  // per assignment step of the best run
};

// Lloyd's algorithm with k-means++ seeding; best of `restarts` by inertia.
// Empty clusters are reseeded to the point farthest from its centroid.
KMeansResult kmeans(const double* data, std::size_t n, std::size_t dim, std::size_t k,
                    std::size_t restarts = 10, std::size_t max_iter = 300,
                    double tol = 1e-6, std::uint64_t seed = 0);

// Maximum-weight one-to-one matching on a rows x cols weight matrix
// (row-major); returns the matched column per row (-1 if unmatched).
std::vector<int> hungarian_max_matching(const std::vector<double>& weights,
                                        std::size_t rows, std::size_t cols);

// Hungarian-matched clustering accuracy: optimal one-to-one matching between
// cluster ids and label values on the contingency matrix.
double cluster_accuracy(const std::vector<std::size_t>& assignments,
                        const std::vector<int>& labels);

// One-vs-rest linear classifier with hinge loss (SVM objective), trained by
// full-batch gradient descent with L2 penalty 1e-4.
double linear_probe(const double* train_x, const std::vector<int>& train_y,
                    const double* test_x, const std::vector<int>& test_y,
                    std::size_t dim, int epochs = 200, double lr = 1e-2);

struct AblationRow {
  std::string name;    // region key or "t1:t2" window
  std::string regime;  // all_subject or leave_two
  double accuracy = 0.0;
  std::size_t n_test = 0;
  double chance = 0.0;
};
using AblationReport = std::vector<AblationRow>;

// Per region: select -> train -> encode the test split -> k-means ->
// matched accuracy. `jobs` parallelizes across regions.
AblationReport region_ablation(const SegmentSet& segments, const Montage& montage,
                               const std::string& regime, const TrainConfig& config,
                               const EncoderConfig& encoder_config,
                               const std::vector<std::string>& regions,
                               std::size_t jobs = 1);

// Per window: mask -> encode -> k-means -> matched accuracy on a pre-trained
// model. The unmasked baseline is always included as window 0:0.
AblationReport timestep_ablation(const EncoderParams& params,
                                 const EncoderConfig& encoder_config,
                                 const SegmentSet& test_segments,
                                 const std::vector<std::pair<std::size_t, std::size_t>>& windows,
                                 const std::string& label_mode = "video",
                                 std::uint64_t kmeans_seed = 0, std::size_t jobs = 1);

std::string report_to_csv(const AblationReport& report);
std::string report_to_json(const AblationReport& report);

// CSV with 1024 feature columns followed by video/emotion/subject labels,
// 17 significant digits.
void export_embeddings(const EmbeddingBatch& embeddings,
                       const std::vector<int>& video_label,
                       const std::vector<int>& emotion_label,
                       const std::vector<int>& subject_id,
                       const std::filesystem::path& path);

struct EmbeddingCsv {
  EmbeddingBatch embeddings;
  std::vector<int> video_label;
  std::vector<int> emotion_label;
  std::vector<int> subject_id;
};
EmbeddingCsv read_embeddings_csv(const std::filesystem::path& path);

}  // namespace eegprobe
