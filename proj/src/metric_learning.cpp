#include "eegprobe/metric_learning.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "eegprobe/errors.hpp"
#include "eegprobe/evaluation.hpp"
#include "eegprobe/rng.hpp"

namespace eegprobe {

void TrainConfig::validate() const {
  if (!(margin >= 0.0)) throw ConfigError("train config: margin must be >= 0");
  if (!(ms_epsilon >= 0.0)) throw ConfigError("train config: ms_epsilon must be >= 0");
  if (!(lr > 0.0)) throw ConfigError("train config: lr must be > 0");
  if (!(weight_decay >= 0.0)) throw ConfigError("train config: weight_decay must be >= 0");
  if (epochs <= 0) throw ConfigError("train config: epochs must be positive");
  if (batch_size < 2) throw ConfigError("train config: batch_size must be at least 2");
  if (label_mode != "video" && label_mode != "emotion") {
    throw ConfigError("train config: label_mode must be video or emotion");
  }
}

TrainConfig TrainConfig::from_json_text(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("train config parse error: ") + e.what());
  }
  TrainConfig c;
  try {
    c.margin = j.value("margin", 0.2);
    c.ms_epsilon = j.value("ms_epsilon", 0.1);
    c.lr = j.value("lr", 3e-4);
    c.weight_decay = j.value("weight_decay", 1e-4);
    c.epochs = j.value("epochs", 100);
    c.batch_size = j.value("batch_size", 64);
    c.seed = j.value("seed", 0ull);
    c.label_mode = j.value("label_mode", std::string("video"));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("train config schema error: ") + e.what());
  }
  c.validate();
  return c;
}

std::string TrainConfig::to_json_text() const {
  nlohmann::ordered_json j;
  j["margin"] = margin;
  j["ms_epsilon"] = ms_epsilon;
  j["lr"] = lr;
  j["weight_decay"] = weight_decay;
  j["epochs"] = epochs;
  j["batch_size"] = batch_size;
  j["seed"] = seed;
  j["label_mode"] = label_mode;
  return j.dump(2) + "\n";
}

ad::Tensor triplet_loss(ad::Tape& tape, const ad::Tensor& embeddings,
                        const TripletBatch& triples, double margin,
                        std::vector<std::string>* warnings) {
  if (!(margin >= 0.0)) throw ConfigError("triplet_loss: margin must be >= 0");
  if (triples.empty()) {
    if (warnings) warnings->push_back("triplet_loss: empty triple set, loss defined as 0");
    return ad::Tensor::scalar(0.0);
  }
  const std::size_t n = embeddings.rows();
  std::vector<std::size_t> ai, pi, ni;
  ai.reserve(triples.size());
  pi.reserve(triples.size());
  ni.reserve(triples.size());
  for (const Triplet& t : triples) {
    if (t.anchor >= n || t.positive >= n || t.negative >= n) {
      throw DimensionError("triplet_loss: triple index out of range");
    }
    if (t.anchor == t.positive) {
      throw ContractError("triplet_loss: anchor and positive must differ");
    }
    ai.push_back(t.anchor);
    pi.push_back(t.positive);
    ni.push_back(t.negative);
  }
  ad::Tensor a = tape.select_rows(embeddings, ai);
  ad::Tensor p = tape.select_rows(embeddings, pi);
  ad::Tensor neg = tape.select_rows(embeddings, ni);
  ad::Tensor ones = ad::Tensor::full({embeddings.cols(), 1}, 1.0);
  ad::Tensor dp = tape.sub(a, p);
  ad::Tensor dn = tape.sub(a, neg);
  ad::Tensor dist_p = tape.matmul(tape.mul(dp, dp), ones);  // M x 1 squared distances
  ad::Tensor dist_n = tape.matmul(tape.mul(dn, dn), ones);
  ad::Tensor viol = tape.add(tape.sub(dist_p, dist_n), ad::Tensor::scalar(margin));
  ad::Tensor hinge = tape.leaky_relu(viol, 0.0);
  return tape.scale(tape.sum(hinge), 1.0 / static_cast<double>(triples.size()));
}

TripletBatch mine_multisimilarity(const double* embeddings, std::size_t n,
                                  std::size_t dim, const std::vector<int>& labels,
                                  double epsilon, std::size_t cap_per_anchor) {
  if (labels.size() != n) throw DimensionError("mine_multisimilarity: labels/rows mismatch");
  TripletBatch out;
  if (n < 3) return out;

  std::vector<double> sim(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    const double* xi = embeddings + i * dim;
    for (std::size_t j = i; j < n; ++j) {
      const double* xj = embeddings + j * dim;
      double s = 0.0;
      for (std::size_t d = 0; d < dim; ++d) s += xi[d] * xj[d];
      sim[i * n + j] = s;
      sim[j * n + i] = s;
    }
  }

  struct Candidate {
    double hardness;
    std::size_t p, neg;
  };
  for (std::size_t a = 0; a < n; ++a) {
    double max_neg = -std::numeric_limits<double>::infinity();
    double min_pos = std::numeric_limits<double>::infinity();
    bool has_pos = false, has_neg = false;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == a) continue;
      const double s = sim[a * n + j];
      if (labels[j] == labels[a]) {
        has_pos = true;
        min_pos = std::min(min_pos, s);
      } else {
        has_neg = true;
        max_neg = std::max(max_neg, s);
      }
    }
    if (!has_pos || !has_neg) continue;

    std::vector<std::size_t> hard_pos, hard_neg;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == a) continue;
      const double s = sim[a * n + j];
      if (labels[j] == labels[a]) {
        if (s < max_neg + epsilon) hard_pos.push_back(j);
      } else {
        if (s > min_pos - epsilon) hard_neg.push_back(j);
      }
    }
    if (hard_pos.empty() || hard_neg.empty()) continue;

    std::vector<Candidate> cands;
    cands.reserve(hard_pos.size() * hard_neg.size());
    for (std::size_t p : hard_pos) {
      for (std::size_t neg : hard_neg) {
        cands.push_back({sim[a * n + neg] - sim[a * n + p], p, neg});
      }
    }
    std::sort(cands.begin(), cands.end(), [](const Candidate& x, const Candidate& y) {
      if (x.hardness != y.hardness) return x.hardness > y.hardness;
      if (x.p != y.p) return x.p < y.p;
      return x.neg < y.neg;
    });
    const std::size_t take = std::min(cap_per_anchor, cands.size());
    for (std::size_t i = 0; i < take; ++i) {
      out.push_back({a, cands[i].p, cands[i].neg});
    }
  }
  return out;
}

void adam_step(std::vector<std::pair<std::string, ad::Tensor*>> params,
               AdamState& state, double lr, double beta1, double beta2, double eps,
               double weight_decay) {
  if (state.slots.empty()) state.slots.resize(params.size());
  if (state.slots.size() != params.size()) {
    throw DimensionError("adam_step: state does not match parameter list");
  }
  state.step += 1;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    ad::Tensor& t = *params[i].second;
    AdamState::Slot& slot = state.slots[i];
    if (slot.m.empty()) {
      slot.m.assign(t.size(), 0.0);
      slot.v.assign(t.size(), 0.0);
    }
    if (slot.m.size() != t.size()) {
      throw DimensionError("adam_step: parameter '" + params[i].first +
                           "' changed size mid-run");
    }
    const std::vector<double>* grad = t.has_grad() ? &t.grad() : nullptr;
    std::vector<double>& value = t.data_mut();
    for (std::size_t k = 0; k < value.size(); ++k) {
      const double g = (grad ? (*grad)[k] : 0.0) + weight_decay * value[k];
      slot.m[k] = beta1 * slot.m[k] + (1.0 - beta1) * g;
      slot.v[k] = beta2 * slot.v[k] + (1.0 - beta2) * g * g;
      const double mhat = slot.m[k] / bc1;
      const double vhat = slot.v[k] / bc2;
      value[k] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

namespace {

const std::vector<int>& labels_for_mode(const SegmentSet& set, const std::string& mode) {
  return mode == "emotion" ? set.emotion_label : set.video_label;
}

}  // namespace

TrainResult train(const SegmentSet& segments, const Montage& montage,
                  const std::string& region_key, const TrainConfig& config,
                  EncoderConfig encoder_config) {
  config.validate();
  SegmentSet selected = select_region(segments, montage, region_key);
  if (encoder_config.in_channels == 0) encoder_config.in_channels = selected.channels;
  if (encoder_config.in_channels != selected.channels) {
    throw ConfigError("train: encoder expects " +
                      std::to_string(encoder_config.in_channels) + " channels but region '" +
                      region_key + "' selects " + std::to_string(selected.channels));
  }
  encoder_config.validate();

  SegmentSet train_set = selected.filter_split(Split::Train);
  SegmentSet val_set = selected.filter_split(Split::Val);
  if (train_set.size() == 0) throw ConfigError("train: train split is empty");

  const std::vector<int>& train_labels = labels_for_mode(train_set, config.label_mode);
  for (int l : train_labels) {
    if (l < 0) {
      throw ConfigError("train: label_mode '" + config.label_mode +
                        "' has unpopulated labels");
    }
  }
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < train_set.size(); ++i) by_class[train_labels[i]].push_back(i);
  if (by_class.size() < 2) {
    throw ConfigError("train: need at least two classes, got " +
                      std::to_string(by_class.size()));
  }

  EncoderParams params = init_params(encoder_config);
  AdamState adam;
  Rng rng(config.seed);
  const std::uint64_t val_kmeans_seed = config.seed ^ 0x9e3779b97f4a7c15ull;

  TrainResult result;
  result.encoder_config = encoder_config;
  double best_acc = -1.0;
  const std::size_t per_class =
      (static_cast<std::size_t>(config.batch_size) + by_class.size() - 1) / by_class.size();
  const std::size_t seg_values = selected.segment_values();

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    // Fresh per-class order each epoch.
    std::vector<std::pair<int, std::vector<std::size_t>>> queues;
    for (auto& [label, indices] : by_class) {
      std::vector<std::size_t> order = indices;
      rng.shuffle(order);
      queues.emplace_back(label, std::move(order));
    }
    std::vector<std::size_t> cursors(queues.size(), 0);

    double loss_sum = 0.0;
    int batches = 0, skipped = 0;
    for (;;) {
      std::vector<std::size_t> batch_idx;
      for (std::size_t q = 0; q < queues.size(); ++q) {
        for (std::size_t i = 0; i < per_class && cursors[q] < queues[q].second.size(); ++i) {
          batch_idx.push_back(queues[q].second[cursors[q]++]);
        }
      }
      if (batch_idx.empty()) break;

      std::vector<double> batch(batch_idx.size() * seg_values);
      std::vector<int> batch_labels(batch_idx.size());
      for (std::size_t i = 0; i < batch_idx.size(); ++i) {
        auto seg = train_set.segment(batch_idx[i]);
        std::copy(seg.begin(), seg.end(), batch.begin() + i * seg_values);
        batch_labels[i] = train_labels[batch_idx[i]];
      }

      ad::Tape tape;
      ad::Tensor emb = encode(tape, batch, batch_idx.size(), params, encoder_config);
      const TripletBatch triples =
          mine_multisimilarity(emb.data().data(), batch_idx.size(), encoder_config.embed_dim,
                               batch_labels, config.ms_epsilon);
      if (triples.empty()) {
        ++skipped;
        continue;
      }
      ad::Tensor loss = triplet_loss(tape, emb, triples, config.margin);
      loss_sum += loss.value();
      ++batches;
      tape.backward(loss);
      adam_step(params.named_arrays(), adam, config.lr, 0.9, 0.999, 1e-8,
                config.weight_decay);
      for (auto& [name, tensor] : params.named_arrays()) tensor->zero_grad();
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.mean_loss = batches > 0 ? loss_sum / batches : 0.0;
    stats.skipped_batches = skipped;
    if (!std::isfinite(stats.mean_loss)) {
      throw ContractError("train: non-finite epoch loss");
    }
    if (val_set.size() > 0) {
      const EmbeddingBatch vemb = encode_batch(val_set, params, encoder_config);
      const std::vector<int>& vlabels = labels_for_mode(val_set, config.label_mode);
      std::set<int> classes(vlabels.begin(), vlabels.end());
      const KMeansResult km =
          kmeans(vemb.values.data(), vemb.rows, vemb.cols, classes.size(), 10, 300, 1e-6,
                 val_kmeans_seed);
      stats.val_accuracy = cluster_accuracy(km.assignments, vlabels);
      if (stats.val_accuracy > best_acc) {
        best_acc = stats.val_accuracy;
        result.params = params.clone(true);
        result.best_epoch = epoch;
      }
    } else {
      stats.val_accuracy = std::numeric_limits<double>::quiet_NaN();
    }
    result.history.push_back(stats);
  }

  if (result.best_epoch < 0) result.params = params.clone(true);
  return result;
}

std::string history_to_csv(const std::vector<EpochStats>& history) {
  std::ostringstream os;
  os << "epoch,mean_loss,val_kmeans_acc\n";
  for (const EpochStats& s : history) {
    char line[96];
    std::snprintf(line, sizeof(line), "%d,%.17g,%.17g\n", s.epoch, s.mean_loss,
                  s.val_accuracy);
    os << line;
  }
  return os.str();
}

}  // namespace eegprobe
