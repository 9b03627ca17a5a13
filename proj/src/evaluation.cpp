#include "eegprobe/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "eegprobe/errors.hpp"
#include "eegprobe/metric_learning.hpp"
#include "eegprobe/rng.hpp"

namespace eegprobe {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double sq_dist(const double* a, const double* b, std::size_t dim) {
  double s = 0.0;
  for (std::size_t d = 0; d < dim; ++d) {
    const double diff = a[d] - b[d];
    s += diff * diff;
  }
  return s;
}

struct LloydRun {
  std::vector<std::size_t> assignments;
  std::vector<double> centroids;
  double inertia = kInf;
  std::vector<double> trace;
};

LloydRun lloyd_once(const double* data, std::size_t n, std::size_t dim, std::size_t k,
                    std::size_t max_iter, double tol, Rng& rng) {
  LloydRun run;
  run.centroids.resize(k * dim);

  // k-means++ seeding
  std::vector<double> d2(n, kInf);
  const std::size_t first = rng.index(n);
  std::copy_n(data + first * dim, dim, run.centroids.begin());
  for (std::size_t c = 1; c < k; ++c) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], sq_dist(data + i * dim,
                                      run.centroids.data() + (c - 1) * dim, dim));
      total += d2[i];
    }
    std::size_t pick;
    if (total > 0.0) {
      const double r = rng.uniform() * total;
      double cum = 0.0;
      pick = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        cum += d2[i];
        if (cum >= r) {
          pick = i;
          break;
        }
      }
    } else {
      pick = rng.index(n);
    }
    std::copy_n(data + pick * dim, dim, run.centroids.begin() + c * dim);
  }

  run.assignments.assign(n, 0);
  std::vector<std::size_t> prev(n, n + 1);
  double prev_inertia = kInf;
  for (std::size_t iter = 0; iter < max_iter; ++iter) {
    // assign
    double inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double best = kInf;
      std::size_t best_c = 0;
      for (std::size_t c = 0; c < k; ++c) {
        const double d = sq_dist(data + i * dim, run.centroids.data() + c * dim, dim);
        if (d < best) {
          best = d;
          best_c = c;
        }
      }
      run.assignments[i] = best_c;
      inertia += best;
    }
    run.trace.push_back(inertia);
    run.inertia = inertia;
    if (run.assignments == prev) break;
    prev = run.assignments;
    if (prev_inertia - inertia <= tol && prev_inertia != kInf) break;
    prev_inertia = inertia;

    // update
    std::vector<double> sums(k * dim, 0.0);
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t c = run.assignments[i];
      counts[c] += 1;
      const double* x = data + i * dim;
      double* s = sums.data() + c * dim;
      for (std::size_t d = 0; d < dim; ++d) s[d] += x[d];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;
      for (std::size_t d = 0; d < dim; ++d) {
        run.centroids[c * dim + d] = sums[c * dim + d] / static_cast<double>(counts[c]);
      }
    }
    // repair empty clusters: move to the farthest point from its centroid
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] != 0) continue;
      double far_d = -1.0;
      std::size_t far_i = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const double d = sq_dist(data + i * dim,
                                 run.centroids.data() + run.assignments[i] * dim, dim);
        if (d > far_d) {
          far_d = d;
          far_i = i;
        }
      }
      std::copy_n(data + far_i * dim, dim, run.centroids.begin() + c * dim);
    }
  }
  return run;
}

}  // namespace

KMeansResult kmeans(const double* data, std::size_t n, std::size_t dim, std::size_t k,
                    std::size_t restarts, std::size_t max_iter, double tol,
                    std::uint64_t seed) {
  if (k == 0) throw ConfigError("kmeans: k must be positive");
  if (n < k) {
    throw ConfigError("kmeans: need at least k points (n=" + std::to_string(n) +
                      ", k=" + std::to_string(k) + ")");
  }
  if (restarts == 0) throw ConfigError("kmeans: restarts must be positive");
  Rng rng(seed);
  LloydRun best;
  for (std::size_t r = 0; r < restarts; ++r) {
    LloydRun run = lloyd_once(data, n, dim, k, max_iter, tol, rng);
    if (run.inertia < best.inertia) best = std::move(run);
  }
  KMeansResult out;
  out.assignments = std::move(best.assignments);
  out.centroids = std::move(best.centroids);
  out.inertia = best.inertia;
  out.inertia_trace = std::move(best.trace);
  return out;
}

std::vector<int> hungarian_max_matching(const std::vector<double>& weights,
                                        std::size_t rows, std::size_t cols) {
  if (weights.size() != rows * cols) {
    throw DimensionError("hungarian_max_matching: weight matrix size mismatch");
  }
  const std::size_t n = std::max(rows, cols);
  double max_w = 0.0;
  for (double w : weights) max_w = std::max(max_w, w);
  // Square min-cost matrix; padding cells cost max_w (weight 0).
  std::vector<double> cost(n * n, max_w);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) cost[i * n + j] = max_w - weights[i * cols + j];
  }

  // Potentials-based O(n^3) assignment, 1-based internals.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, kInf);
    std::vector<bool> used(n + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = p[j0];
      double delta = kInf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  std::vector<int> match(rows, -1);
  for (std::size_t j = 1; j <= n; ++j) {
    const std::size_t i = p[j];
    if (i >= 1 && i <= rows && j <= cols) match[i - 1] = static_cast<int>(j - 1);
  }
  return match;
}

double cluster_accuracy(const std::vector<std::size_t>& assignments,
                        const std::vector<int>& labels) {
  if (assignments.size() != labels.size()) {
    throw DimensionError("cluster_accuracy: assignments and labels differ in length");
  }
  const std::size_t n = labels.size();
  if (n == 0) return 0.0;

  std::map<std::size_t, std::size_t> cluster_ids;
  for (std::size_t a : assignments) cluster_ids.emplace(a, cluster_ids.size());
  std::map<int, std::size_t> label_ids;
  for (int l : labels) label_ids.emplace(l, label_ids.size());
  const std::size_t k = cluster_ids.size();
  const std::size_t m = label_ids.size();

  std::vector<double> contingency(k * m, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    contingency[cluster_ids[assignments[i]] * m + label_ids[labels[i]]] += 1.0;
  }
  const std::vector<int> match = hungarian_max_matching(contingency, k, m);
  double matched = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    if (match[c] >= 0) matched += contingency[c * m + static_cast<std::size_t>(match[c])];
  }
  return matched / static_cast<double>(n);
}

double linear_probe(const double* train_x, const std::vector<int>& train_y,
                    const double* test_x, const std::vector<int>& test_y,
                    std::size_t dim, int epochs, double lr) {
  const std::size_t n = train_y.size();
  if (n == 0) throw ConfigError("linear_probe: empty training set");
  std::map<int, std::size_t> label_ids;
  for (int l : train_y) label_ids.emplace(l, 0);
  std::size_t next = 0;
  for (auto& [l, id] : label_ids) id = next++;
  const std::size_t k = label_ids.size();
  if (k < 2) throw ConfigError("linear_probe: need at least two classes");
  const double l2 = 1e-4;

  std::vector<double> w(k * dim, 0.0), b(k, 0.0);
  std::vector<double> grad_w(k * dim), grad_b(k);
  for (int epoch = 0; epoch < epochs; ++epoch) {
    std::fill(grad_w.begin(), grad_w.end(), 0.0);
    std::fill(grad_b.begin(), grad_b.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double* x = train_x + i * dim;
      const std::size_t yi = label_ids[train_y[i]];
      for (std::size_t c = 0; c < k; ++c) {
        double score = b[c];
        const double* wc = w.data() + c * dim;
        for (std::size_t d = 0; d < dim; ++d) score += wc[d] * x[d];
        const double y = c == yi ? 1.0 : -1.0;
        if (y * score < 1.0) {
          double* gw = grad_w.data() + c * dim;
          for (std::size_t d = 0; d < dim; ++d) gw[d] -= y * x[d];
          grad_b[c] -= y;
        }
      }
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t c = 0; c < k; ++c) {
      double* wc = w.data() + c * dim;
      const double* gw = grad_w.data() + c * dim;
      for (std::size_t d = 0; d < dim; ++d) {
        wc[d] -= lr * (gw[d] * inv_n + 2.0 * l2 * wc[d]);
      }
      b[c] -= lr * grad_b[c] * inv_n;
    }
  }

  std::size_t correct = 0;
  for (std::size_t i = 0; i < test_y.size(); ++i) {
    const double* x = test_x + i * dim;
    double best = -kInf;
    std::size_t best_c = 0;
    for (std::size_t c = 0; c < k; ++c) {
      double score = b[c];
      const double* wc = w.data() + c * dim;
      for (std::size_t d = 0; d < dim; ++d) score += wc[d] * x[d];
      if (score > best) {
        best = score;
        best_c = c;
      }
    }
    auto it = label_ids.find(test_y[i]);
    if (it != label_ids.end() && it->second == best_c) ++correct;
  }
  if (test_y.empty()) throw ConfigError("linear_probe: empty test set");
  return static_cast<double>(correct) / static_cast<double>(test_y.size());
}

namespace {

void run_jobs(std::size_t count, std::size_t jobs, const std::function<void(std::size_t)>& fn) {
  if (jobs <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(count);
  std::atomic<std::size_t> cursor{0};
  const std::size_t workers = std::min(jobs, count);
  for (std::size_t t = 0; t < workers; ++t) {
    pool.emplace_back([&]() {
      for (;;) {
        const std::size_t i = cursor.fetch_add(1);
        if (i >= count) return;
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::size_t distinct_count(const std::vector<int>& labels) {
  return std::set<int>(labels.begin(), labels.end()).size();
}

}  // namespace

AblationReport region_ablation(const SegmentSet& segments, const Montage& montage,
                               const std::string& regime, const TrainConfig& config,
                               const EncoderConfig& encoder_config,
                               const std::vector<std::string>& regions,
                               std::size_t jobs) {
  if (regime != "all_subject" && regime != "leave_two") {
    throw ConfigError("region_ablation: regime must be all_subject or leave_two");
  }
  if (regime == "all_subject" && segments.count_split(Split::Val) == 0) {
    throw ConfigError("region_ablation: all_subject regime expects a val split");
  }
  if (regime == "leave_two" && segments.count_split(Split::Val) != 0) {
    throw ConfigError("region_ablation: leave_two regime expects an empty val split");
  }
  if (segments.count_split(Split::Test) == 0) {
    throw ConfigError("region_ablation: test split is empty");
  }
  for (const std::string& key : regions) montage.region(key);  // fail fast

  AblationReport report(regions.size());
  const std::uint64_t kmeans_seed = config.seed ^ 0x6a09e667f3bcc909ull;
  run_jobs(regions.size(), jobs, [&](std::size_t i) {
    const std::string& key = regions[i];
    TrainResult tr = train(segments, montage, key, config, encoder_config);
    SegmentSet test = select_region(segments, montage, key).filter_split(Split::Test);
    const std::vector<int>& labels =
        config.label_mode == "emotion" ? test.emotion_label : test.video_label;
    const EmbeddingBatch emb = encode_batch(test, tr.params, tr.encoder_config);
    const std::size_t k = distinct_count(labels);
    const KMeansResult km =
        kmeans(emb.values.data(), emb.rows, emb.cols, k, 10, 300, 1e-6, kmeans_seed);
    AblationRow row;
    row.name = key;
    row.regime = regime;
    row.accuracy = cluster_accuracy(km.assignments, labels);
    row.n_test = test.size();
    row.chance = 1.0 / static_cast<double>(k);
    report[i] = std::move(row);
  });
  return report;
}

AblationReport timestep_ablation(
    const EncoderParams& params, const EncoderConfig& encoder_config,
    const SegmentSet& test_segments,
    const std::vector<std::pair<std::size_t, std::size_t>>& windows,
    const std::string& label_mode, std::uint64_t kmeans_seed, std::size_t jobs) {
  if (test_segments.size() == 0) throw ConfigError("timestep_ablation: no test segments");
  const std::vector<int>& labels =
      label_mode == "emotion" ? test_segments.emotion_label : test_segments.video_label;
  const std::size_t k = distinct_count(labels);
  if (k < 2) throw ConfigError("timestep_ablation: need at least two classes");

  // Validate all windows before spending compute.
  for (const auto& [t1, t2] : windows) {
    if (!(t1 < t2 && t2 <= SegmentSet::kSamplesPerSegment)) {
      throw ConfigError("timestep_ablation: window must satisfy 0 <= t1 < t2 <= 400 (got " +
                        std::to_string(t1) + ":" + std::to_string(t2) + ")");
    }
  }

  AblationReport report(windows.size() + 1);
  run_jobs(windows.size() + 1, jobs, [&](std::size_t i) {
    SegmentSet masked =
        i == 0 ? test_segments
               : mask_timesteps(test_segments, windows[i - 1].first, windows[i - 1].second);
    const EmbeddingBatch emb = encode_batch(masked, params, encoder_config);
    const KMeansResult km =
        kmeans(emb.values.data(), emb.rows, emb.cols, k, 10, 300, 1e-6, kmeans_seed);
    AblationRow row;
    row.name = i == 0 ? "0:0"
                      : std::to_string(windows[i - 1].first) + ":" +
                            std::to_string(windows[i - 1].second);
    row.regime = "pretrained";
    row.accuracy = cluster_accuracy(km.assignments, labels);
    row.n_test = masked.size();
    row.chance = 1.0 / static_cast<double>(k);
    report[i] = std::move(row);
  });
  return report;
}

std::string report_to_csv(const AblationReport& report) {
  std::ostringstream os;
  os << "region,regime,accuracy,n_test,chance\n";
  for (const AblationRow& r : report) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%s,%s,%.17g,%zu,%.17g\n", r.name.c_str(),
                  r.regime.c_str(), r.accuracy, r.n_test, r.chance);
    os << buf;
  }
  return os.str();
}

std::string report_to_json(const AblationReport& report) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const AblationRow& r : report) {
    arr.push_back({{"region", r.name},
                   {"regime", r.regime},
                   {"accuracy", r.accuracy},
                   {"n_test", r.n_test},
                   {"chance", r.chance}});
  }
  return arr.dump(2) + "\n";
}

void export_embeddings(const EmbeddingBatch& embeddings,
                       const std::vector<int>& video_label,
                       const std::vector<int>& emotion_label,
                       const std::vector<int>& subject_id,
                       const std::filesystem::path& path) {
  if (video_label.size() != embeddings.rows || emotion_label.size() != embeddings.rows ||
      subject_id.size() != embeddings.rows) {
    throw DimensionError("export_embeddings: label arrays must match row count");
  }
  std::ofstream out(path);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  for (std::size_t j = 0; j < embeddings.cols; ++j) out << "f" << j << ",";
  out << "video,emotion,subject\n";
  char buf[32];
  for (std::size_t i = 0; i < embeddings.rows; ++i) {
    const double* row = embeddings.row(i);
    for (std::size_t j = 0; j < embeddings.cols; ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", row[j]);
      out << buf << ",";
    }
    out << video_label[i] << "," << emotion_label[i] << "," << subject_id[i] << "\n";
  }
  if (!out) throw FormatError("short write to " + path.string());
}

EmbeddingCsv read_embeddings_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open embeddings CSV " + path.string());
  std::string header;
  if (!std::getline(in, header)) throw FormatError("empty embeddings CSV " + path.string());
  std::size_t feature_cols = 0;
  {
    std::stringstream hs(header);
    std::string col;
    std::vector<std::string> cols;
    while (std::getline(hs, col, ',')) cols.push_back(col);
    if (cols.size() < 4 || cols[cols.size() - 3] != "video" ||
        cols[cols.size() - 2] != "emotion" || cols.back() != "subject") {
      throw FormatError("embeddings CSV must end with video,emotion,subject columns");
    }
    feature_cols = cols.size() - 3;
  }
  EmbeddingCsv out;
  out.embeddings.cols = feature_cols;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ls(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (cells.size() != feature_cols + 3) {
      throw FormatError("embeddings CSV row has " + std::to_string(cells.size()) +
                        " cells, expected " + std::to_string(feature_cols + 3));
    }
    for (std::size_t j = 0; j < feature_cols; ++j) {
      out.embeddings.values.push_back(std::stod(cells[j]));
    }
    out.video_label.push_back(std::stoi(cells[feature_cols]));
    out.emotion_label.push_back(std::stoi(cells[feature_cols + 1]));
    out.subject_id.push_back(std::stoi(cells[feature_cols + 2]));
    out.embeddings.rows += 1;
  }
  return out;
}

}  // namespace eegprobe
