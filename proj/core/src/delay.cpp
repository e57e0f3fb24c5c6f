#include "coherence/delay.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

#include <json.hpp>

#include "coherence/error.hpp"
#include "coherence/io.hpp"
#include "coherence/parallel.hpp"

namespace coherence {

DelayConfig::DelayConfig(std::size_t delays, double dt)
    : delays_(delays), dt_(dt), window_(static_cast<double>(delays) * dt) {
  require(delays_ >= 1, ErrorCode::kConfig, "number of delays must be >= 1");
  require(std::isfinite(dt_) && dt_ > 0.0, ErrorCode::kConfig, "dt must be positive");
}

DelayConfig DelayConfig::from_window(double window, double dt) {
  require(std::isfinite(window) && window >= 0.0, ErrorCode::kConfig,
          "embedding window must be non-negative");
  require(std::isfinite(dt) && dt > 0.0, ErrorCode::kConfig, "dt must be positive");
  const double ratio = window / dt;
  const auto q = static_cast<std::size_t>(std::llround(ratio));
  require(std::abs(ratio - static_cast<double>(q)) <= 1e-6 * std::max(1.0, ratio),
          ErrorCode::kConfig, "window is not an integer multiple of dt");
  return DelayConfig(std::max<std::size_t>(q, 1), dt);
}

std::size_t embedded_count(const StateTrajectory& traj, const DelayConfig& cfg) {
  require(traj.size() >= cfg.delays() + 1, ErrorCode::kConfig,
          "trajectory shorter than the delay window plus one sample");
  return traj.size() - cfg.delays() + 1;
}

namespace {

/// Column-major copy of the observations for streaming distance updates.
class DelaySweep {
 public:
  DelaySweep(const StateTrajectory& traj, std::size_t delays)
      : delays_(delays), total_(traj.size()), dim_(traj.dimension()), cols_(dim_) {
    for (std::size_t c = 0; c < dim_; ++c) {
      cols_[c].resize(total_);
      for (std::size_t r = 0; r < total_; ++r) {
        cols_[c][r] = traj.states()(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
      }
    }
    n_ = total_ - delays_ + 1;
  }

  std::size_t n() const { return n_; }

  double point_sq(std::size_t a, std::size_t b) const {
    double d = 0.0;
    for (std::size_t c = 0; c < dim_; ++c) {
      const double diff = cols_[c][a] - cols_[c][b];
      d += diff * diff;
    }
    return d;
  }

  /// Unnormalized sum S(i, j) over the Q delays.
  double direct_pair(std::size_t i, std::size_t j) const {
    double s = 0.0;
    for (std::size_t q = 0; q < delays_; ++q) s += point_sq(i + q, j + q);
    return s;
  }

  void direct_row(std::size_t i, std::span<double> sums, std::span<double> scratch) const {
    std::fill(sums.begin(), sums.end(), 0.0);
    for (std::size_t q = 0; q < delays_; ++q) {
      std::fill(scratch.begin(), scratch.end(), 0.0);
      for (std::size_t c = 0; c < dim_; ++c) {
        const double xi = cols_[c][i + q];
        const double* col = cols_[c].data() + q;
        for (std::size_t j = 0; j < n_; ++j) {
          const double diff = xi - col[j];
          scratch[j] += diff * diff;
        }
      }
      for (std::size_t j = 0; j < n_; ++j) sums[j] += scratch[j];
    }
  }

  /// Row i+1 from row i.
  void advance(std::size_t i, std::span<const double> prev, std::span<double> next) const {
    next[0] = direct_pair(i + 1, 0);
    switch (dim_) {
      case 1: advance_fixed<1>(i, prev, next); break;
      case 2: advance_fixed<2>(i, prev, next); break;
      case 3: advance_fixed<3>(i, prev, next); break;
      case 4: advance_fixed<4>(i, prev, next); break;
      default: advance_generic(i, prev, next); break;
    }
  }

 private:
  template <std::size_t D>
  void advance_fixed(std::size_t i, std::span<const double> prev, std::span<double> next) const {
    const std::size_t tail = i + delays_;
    double head_pt[D];
    double tail_pt[D];
    const double* col[D];
    for (std::size_t c = 0; c < D; ++c) {
      head_pt[c] = cols_[c][i];
      tail_pt[c] = cols_[c][tail];
      col[c] = cols_[c].data();
    }
    const std::size_t q = delays_;
    const double* p = prev.data();
    double* out = next.data() + 1;
    const std::size_t m = n_ - 1;
    for (std::size_t j = 0; j < m; ++j) {
      double removed = 0.0;
      double added = 0.0;
      for (std::size_t c = 0; c < D; ++c) {
        const double a = head_pt[c] - col[c][j];
        const double b = tail_pt[c] - col[c][j + q];
        removed += a * a;
        added += b * b;
      }
      out[j] = p[j] - removed + added;
    }
  }

  void advance_generic(std::size_t i, std::span<const double> prev,
                       std::span<double> next) const {
    for (std::size_t j = 0; j + 1 < n_; ++j) {
      next[j + 1] = prev[j] - point_sq(i, j) + point_sq(i + delays_, j + delays_);
    }
  }

  std::size_t delays_;
  std::size_t total_;
  std::size_t dim_;
  std::size_t n_ = 0;
  std::vector<std::vector<double>> cols_;
};

/// Fills rows [begin, end) of the averaged-distance table, calling
/// visit(row, sums) with unnormalized sums for each row in order.
template <typename Visit>
void sweep_rows(const DelaySweep& sweep, std::size_t begin, std::size_t end, Visit&& visit) {
  const std::size_t n = sweep.n();
  std::vector<double> prev(n), next(n), scratch(n);
  for (std::size_t row = begin; row < end; ++row) {
    if (row == begin || row % kRecursionRestart == 0) {
      sweep.direct_row(row, next, scratch);
    } else {
      sweep.advance(row - 1, prev, next);
    }
    visit(row, std::span<const double>(next));
    std::swap(prev, next);
  }
}

}  // namespace

double delay_sq_distance(const StateTrajectory& traj, const DelayConfig& cfg, std::size_t i,
                         std::size_t j) {
  const std::size_t n = embedded_count(traj, cfg);
  require(i < n && j < n, ErrorCode::kRange,
          "delay index outside the embeddable range [0, " + std::to_string(n) + ")");
  const auto& x = traj.states();
  double s = 0.0;
  for (std::size_t q = 0; q < cfg.delays(); ++q) {
    double d = 0.0;
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      const double diff = x(static_cast<Eigen::Index>(i + q), c) -
                          x(static_cast<Eigen::Index>(j + q), c);
      d += diff * diff;
    }
    s += d;
  }
  return s / static_cast<double>(cfg.delays());
}

double delay_sq_distance_to(const StateMatrix& window, const StateTrajectory& traj,
                            std::size_t j) {
  const auto q_count = static_cast<std::size_t>(window.rows());
  require(q_count >= 1 && static_cast<std::size_t>(window.cols()) == traj.dimension(),
          ErrorCode::kShape, "query window has the wrong shape");
  require(j + q_count <= traj.size(), ErrorCode::kRange, "training index out of range");
  const auto& x = traj.states();
  double s = 0.0;
  for (std::size_t q = 0; q < q_count; ++q) {
    double d = 0.0;
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      const double diff = window(static_cast<Eigen::Index>(q), c) -
                          x(static_cast<Eigen::Index>(j + q), c);
      d += diff * diff;
    }
    s += d;
  }
  return s / static_cast<double>(q_count);
}

std::size_t default_knn(std::size_t n) {
  const auto root = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(n))));
  const std::size_t k = std::max<std::size_t>(root, 50);
  return n > 1 ? std::min(k, n - 1) : 1;
}

SparseDistanceGraph knn_scan(const StateTrajectory& traj, const DelayConfig& cfg,
                             std::size_t k) {
  const std::size_t n = embedded_count(traj, cfg);
  require(n >= 2, ErrorCode::kConfig, "need at least 2 embedded samples");
  require(k >= 1 && k < n, ErrorCode::kConfig,
          "k must satisfy 1 <= k < n (k=" + std::to_string(k) + ", n=" + std::to_string(n) + ")");

  const DelaySweep sweep(traj, cfg.delays());
  const double inv_q = 1.0 / static_cast<double>(cfg.delays());

  SparseDistanceGraph graph;
  graph.n = n;
  graph.k = k;
  graph.delays = cfg.delays();
  graph.dt = cfg.dt();
  graph.symmetrized = false;
  graph.row_ptr.resize(n + 1);
  for (std::size_t i = 0; i <= n; ++i) graph.row_ptr[i] = static_cast<std::uint64_t>(i * k);
  graph.cols.resize(n * k);
  graph.sq_dists.resize(n * k);

  parallel_for(0, n, kRecursionRestart, [&](std::size_t begin, std::size_t end) {
    using Candidate = std::pair<double, std::uint32_t>;
    std::vector<Candidate> heap;
    heap.reserve(k);
    const std::size_t others = k - 1;
    sweep_rows(sweep, begin, end, [&](std::size_t row, std::span<const double> sums) {
      heap.clear();
      double threshold = std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < n; ++j) {
        const double s = sums[j];
        if (s >= threshold || j == row) continue;
        if (heap.size() < others) {
          heap.emplace_back(s, static_cast<std::uint32_t>(j));
          std::push_heap(heap.begin(), heap.end());
          if (heap.size() == others) threshold = heap.front().first;
        } else {
          std::pop_heap(heap.begin(), heap.end());
          heap.back() = {s, static_cast<std::uint32_t>(j)};
          std::push_heap(heap.begin(), heap.end());
          threshold = heap.front().first;
        }
      }
      std::sort_heap(heap.begin(), heap.end());
      const std::size_t base = row * k;
      graph.cols[base] = static_cast<std::uint32_t>(row);
      graph.sq_dists[base] = sums[row] * inv_q;
      for (std::size_t m = 0; m < heap.size(); ++m) {
        graph.cols[base + 1 + m] = heap[m].second;
        graph.sq_dists[base + 1 + m] = heap[m].first * inv_q;
      }
    });
  });
  return graph;
}

SparseDistanceGraph symmetrize(const SparseDistanceGraph& graph) {
  if (graph.symmetrized) return graph;
  const std::size_t n = graph.n;

  struct Entry {
    std::uint32_t col;
    std::uint32_t origin;
    double dist;
  };
  std::vector<std::uint64_t> counts(n + 1, 0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t p = graph.row_begin(i); p < graph.row_end(i); ++p) {
      const std::size_t j = graph.cols[p];
      ++counts[i + 1];
      if (j != i) ++counts[j + 1];
    }
  }
  for (std::size_t i = 0; i < n; ++i) counts[i + 1] += counts[i];
  std::vector<Entry> entries(counts[n]);
  std::vector<std::uint64_t> fill(counts.begin(), counts.end() - 1);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t p = graph.row_begin(i); p < graph.row_end(i); ++p) {
      const std::uint32_t j = graph.cols[p];
      const double d = graph.sq_dists[p];
      entries[fill[i]++] = {j, static_cast<std::uint32_t>(i), d};
      if (j != i) entries[fill[j]++] = {static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(i), d};
    }
  }

  std::vector<std::uint64_t> kept(n + 1, 0);
  parallel_for(0, n, 4096, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      auto first = entries.begin() + static_cast<std::ptrdiff_t>(counts[i]);
      auto last = entries.begin() + static_cast<std::ptrdiff_t>(counts[i + 1]);
      const auto canonical = [i](const Entry& e) {
        return e.origin == std::min<std::uint32_t>(static_cast<std::uint32_t>(i), e.col) ? 0 : 1;
      };
      std::sort(first, last, [&](const Entry& a, const Entry& b) {
        if (a.col != b.col) return a.col < b.col;
        return canonical(a) < canonical(b);
      });
      auto new_last = std::unique(first, last, [](const Entry& a, const Entry& b) {
        return a.col == b.col;
      });
      kept[i + 1] = static_cast<std::uint64_t>(new_last - first);
    }
  });

  SparseDistanceGraph out;
  out.n = n;
  out.k = graph.k;
  out.delays = graph.delays;
  out.dt = graph.dt;
  out.symmetrized = true;
  out.row_ptr.assign(n + 1, 0);
  for (std::size_t i = 0; i < n; ++i) out.row_ptr[i + 1] = out.row_ptr[i] + kept[i + 1];
  out.cols.resize(out.row_ptr[n]);
  out.sq_dists.resize(out.row_ptr[n]);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t src = counts[i];
    const std::size_t dst = out.row_ptr[i];
    for (std::size_t m = 0; m < kept[i + 1]; ++m) {
      out.cols[dst + m] = entries[src + m].col;
      out.sq_dists[dst + m] = entries[src + m].dist;
    }
  }
  return out;
}

SparseDistanceGraph build_knn_graph(const StateTrajectory& traj, const DelayConfig& cfg,
                                    std::size_t k) {
  return symmetrize(knn_scan(traj, cfg, k));
}

Eigen::MatrixXd delay_distance_matrix(const StateTrajectory& traj, const DelayConfig& cfg) {
  const std::size_t n = embedded_count(traj, cfg);
  const DelaySweep sweep(traj, cfg.delays());
  const double inv_q = 1.0 / static_cast<double>(cfg.delays());
  Eigen::MatrixXd out(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  parallel_for(0, n, kRecursionRestart, [&](std::size_t begin, std::size_t end) {
    sweep_rows(sweep, begin, end, [&](std::size_t row, std::span<const double> sums) {
      for (std::size_t j = row; j < n; ++j) {
        out(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(j)) = sums[j] * inv_q;
      }
    });
  });
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    for (Eigen::Index j = 0; j < i; ++j) out(i, j) = out(j, i);
  }
  return out;
}

void save_graph(const SparseDistanceGraph& graph, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorCode::kIo, "cannot write " + path.string());
  const nlohmann::json header = {{"format", "coherence-graph"},
                                 {"version", 1},
                                 {"n", graph.n},
                                 {"k", graph.k},
                                 {"Q", graph.delays},
                                 {"dt", graph.dt},
                                 {"symmetrized", graph.symmetrized},
                                 {"nnz", graph.nnz()}};
  out << header.dump() << '\n';
  io::write_block(out, std::span<const std::uint64_t>(graph.row_ptr));
  io::write_block(out, std::span<const std::uint32_t>(graph.cols));
  io::write_block(out, std::span<const double>(graph.sq_dists));
  require(static_cast<bool>(out), ErrorCode::kIo, "write failed for " + path.string());
}

SparseDistanceGraph load_graph(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::kIo, "cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kParse, path.string() + ": bad graph header: " + e.what());
  }
  require(header.value("format", "") == "coherence-graph", ErrorCode::kParse,
          path.string() + " is not a graph file");
  SparseDistanceGraph graph;
  graph.n = header.at("n").get<std::size_t>();
  graph.k = header.at("k").get<std::size_t>();
  graph.delays = header.at("Q").get<std::size_t>();
  graph.dt = header.at("dt").get<double>();
  graph.symmetrized = header.at("symmetrized").get<bool>();
  const auto nnz = header.at("nnz").get<std::size_t>();
  graph.row_ptr.resize(graph.n + 1);
  graph.cols.resize(nnz);
  graph.sq_dists.resize(nnz);
  io::read_block(in, std::span<std::uint64_t>(graph.row_ptr));
  io::read_block(in, std::span<std::uint32_t>(graph.cols));
  io::read_block(in, std::span<double>(graph.sq_dists));
  require(graph.row_ptr.back() == nnz, ErrorCode::kParse, path.string() + ": corrupt offsets");
  return graph;
}

}  // namespace coherence
