#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "seqattn/errors.hpp"
#include "seqattn/linalg.hpp"

namespace seqattn {

enum class Task { regression, classification };

inline const char* to_string(Task t) {
  return t == Task::regression ? "regression" : "classification";
}

inline Task task_from_string(std::string_view s) {
  if (s == "regression") return Task::regression;
  if (s == "classification") return Task::classification;
  throw ContractError("unknown task '" + std::string(s) + "'");
}

enum class NormKind { none, unit_columns, zscore };

inline const char* to_string(NormKind k) {
  switch (k) {
    case NormKind::unit_columns: return "unit_columns";
    case NormKind::zscore: return "zscore";
    default: return "none";
  }
}

/// raw_value = normalized_value * scale + shift, per feature (and for y).
struct NormMeta {
  NormKind kind = NormKind::none;
  Vector scale;
  Vector shift;
  std::vector<bool> degenerate;  // zero (unit) or constant (zscore) columns
  double y_scale = 1.0;
  double y_shift = 0.0;
};

struct Dataset {
  Matrix x;
  Vector y;  // real targets, or class ids 0..num_classes-1 stored as doubles
  Task task = Task::regression;
  int num_classes = 0;
  std::vector<std::string> feature_names;
  NormMeta norm_meta;

  Index n() const { return x.rows(); }
  Index d() const { return x.cols(); }
};

struct ExampleRange {
  Index begin = 0;
  Index end = 0;
  Index size() const { return end - begin; }
  friend bool operator==(const ExampleRange&, const ExampleRange&) = default;
};

struct ShardPlan {
  std::vector<ExampleRange> round_boundaries;
};

struct SidecarMeta {
  Task task = Task::regression;
  std::string label_column;  // header name, or a decimal column index
};

namespace detail {

inline std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> cells;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      cells.push_back(std::move(cur));
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  cells.push_back(std::move(cur));
  return cells;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

inline std::optional<double> parse_real(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

inline bool is_all_digits(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

/// Maps arbitrary numeric labels to dense class ids in ascending label order.
inline int encode_classes(Vector& y) {
  std::map<double, int> ids;
  for (Index i = 0; i < y.size(); ++i) ids.emplace(y[i], 0);
  int next = 0;
  for (auto& [value, id] : ids) id = next++;
  for (Index i = 0; i < y.size(); ++i) y[i] = ids.at(y[i]);
  return next;
}

}  // namespace detail

/// Reads a rectangular numeric CSV. label_column is a header name, or a
/// 0-based index when the file has no header (or the string is all digits
/// and matches no header name).
inline Dataset load_csv(const std::string& path, const std::string& label_column, bool has_header,
                        Task task = Task::regression) {
  std::ifstream in(path);
  if (!in) throw ParseError(0, "cannot open '" + path + "'");

  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty() || detail::trim(line) == "\r") continue;
    auto cells = detail::split_csv_line(line);
    if (has_header && header.empty()) {
      for (auto& c : cells) header.emplace_back(detail::trim(c));
      width = header.size();
      continue;
    }
    if (width == 0) width = cells.size();
    if (cells.size() != width) {
      throw ParseError(line_no, path + ":" + std::to_string(line_no) + ": expected " + std::to_string(width) +
                                    " cells, found " + std::to_string(cells.size()));
    }
    std::vector<double> row(width);
    for (std::size_t j = 0; j < width; ++j) {
      auto v = detail::parse_real(cells[j]);
      if (!v) {
        throw ParseError(line_no, path + ":" + std::to_string(line_no) + ": non-numeric cell '" + cells[j] +
                                      "' in column " + std::to_string(j + 1));
      }
      row[j] = *v;
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ParseError(line_no, path + ": no data rows");
  if (width < 2) throw ParseError(0, path + ": need at least one feature column and a label column");

  std::optional<std::size_t> label_idx;
  if (has_header) {
    auto it = std::find(header.begin(), header.end(), label_column);
    if (it != header.end()) label_idx = static_cast<std::size_t>(it - header.begin());
  }
  if (!label_idx && detail::is_all_digits(label_column)) label_idx = std::stoul(label_column);
  if (!label_idx || *label_idx >= width) {
    throw ParseError(0, path + ": label column '" + label_column + "' not found");
  }

  Dataset ds;
  ds.task = task;
  const auto n = static_cast<Index>(rows.size());
  const auto d = static_cast<Index>(width - 1);
  ds.x.resize(n, d);
  ds.y.resize(n);
  for (Index i = 0; i < n; ++i) {
    Index col = 0;
    for (std::size_t j = 0; j < width; ++j) {
      if (j == *label_idx) {
        ds.y[i] = rows[static_cast<std::size_t>(i)][j];
      } else {
        ds.x(i, col++) = rows[static_cast<std::size_t>(i)][j];
      }
    }
  }
  for (std::size_t j = 0; j < width; ++j) {
    if (j == *label_idx) continue;
    ds.feature_names.push_back(has_header ? header[j] : "f" + std::to_string(ds.feature_names.size()));
  }
  if (task == Task::classification) ds.num_classes = detail::encode_classes(ds.y);
  return ds;
}

/// Sidecar schema: {"task": "regression"|"classification", "label_column": name-or-index}.
inline SidecarMeta load_sidecar(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(0, "cannot open sidecar '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(0, path + ": " + e.what());
  }
  SidecarMeta meta;
  if (j.contains("task")) meta.task = task_from_string(j.at("task").get<std::string>());
  if (j.contains("label_column")) {
    const auto& lc = j.at("label_column");
    meta.label_column = lc.is_number_integer() ? std::to_string(lc.get<long long>()) : lc.get<std::string>();
  }
  return meta;
}

/// Scales each nonzero column to unit l2 norm and, for regression, y as well.
inline Dataset normalize_unit_columns(Dataset ds) {
  const Index d = ds.d();
  ds.norm_meta = NormMeta{};
  ds.norm_meta.kind = NormKind::unit_columns;
  ds.norm_meta.scale = Vector::Ones(d);
  ds.norm_meta.shift = Vector::Zero(d);
  ds.norm_meta.degenerate.assign(static_cast<std::size_t>(d), false);
  for (Index j = 0; j < d; ++j) {
    const double norm = ds.x.col(j).norm();
    if (norm == 0.0) {
      ds.norm_meta.degenerate[static_cast<std::size_t>(j)] = true;
      continue;
    }
    ds.x.col(j) /= norm;
    ds.norm_meta.scale[j] = norm;
  }
  if (ds.task == Task::regression) {
    const double yn = ds.y.norm();
    if (yn > 0.0) {
      ds.y /= yn;
      ds.norm_meta.y_scale = yn;
    }
  }
  return ds;
}

/// Per-feature mean 0 / std 1 (population std). Constant columns become 0 and
/// are flagged. Labels are untouched.
inline Dataset normalize_zscore(Dataset ds) {
  const Index d = ds.d();
  const auto n = static_cast<double>(ds.n());
  ds.norm_meta = NormMeta{};
  ds.norm_meta.kind = NormKind::zscore;
  ds.norm_meta.scale = Vector::Ones(d);
  ds.norm_meta.shift = Vector::Zero(d);
  ds.norm_meta.degenerate.assign(static_cast<std::size_t>(d), false);
  for (Index j = 0; j < d; ++j) {
    const double mean = ds.x.col(j).sum() / n;
    ds.x.col(j).array() -= mean;
    const double sd = std::sqrt(ds.x.col(j).squaredNorm() / n);
    ds.norm_meta.shift[j] = mean;
    if (sd <= 1e-12 * std::max(1.0, std::abs(mean))) {
      ds.x.col(j).setZero();
      ds.norm_meta.degenerate[static_cast<std::size_t>(j)] = true;
      continue;
    }
    ds.x.col(j) /= sd;
    ds.norm_meta.scale[j] = sd;
  }
  return ds;
}

/// Inverts the recorded normalization (returns raw-scale X and y).
inline Dataset denormalize(Dataset ds) {
  const auto& m = ds.norm_meta;
  if (m.kind == NormKind::none) return ds;
  for (Index j = 0; j < ds.d(); ++j) {
    ds.x.col(j) = (ds.x.col(j) * m.scale[j]).array() + m.shift[j];
  }
  ds.y = (ds.y * m.y_scale).array() + m.y_shift;
  ds.norm_meta = NormMeta{};
  return ds;
}

/// Features flagged degenerate by normalization, plus any all-zero column.
inline std::vector<bool> degenerate_columns(const Dataset& ds) {
  std::vector<bool> out(static_cast<std::size_t>(ds.d()), false);
  for (Index j = 0; j < ds.d(); ++j) {
    const auto u = static_cast<std::size_t>(j);
    out[u] = (u < ds.norm_meta.degenerate.size() && ds.norm_meta.degenerate[u]) || ds.x.col(j).isZero(0.0);
  }
  return out;
}

struct SyntheticInstance {
  Dataset dataset;
  IndexList true_support;  // ascending
  Vector beta;
};

/// Gaussian design, k_true-sparse coefficients with magnitudes in [0.5, 1.5]
/// and random signs, y = X beta + sigma * N(0, 1). Deterministic per seed.
inline SyntheticInstance synth_sparse_linear(Index n, Index d, Index k_true, double noise_sigma,
                                             std::uint64_t seed) {
  detail::require(n >= 1 && d >= 1, "synth_sparse_linear: n and d must be positive");
  detail::require(k_true >= 0 && k_true <= d, "synth_sparse_linear: k_true must be in [0, d]");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> mag(0.5, 1.5);

  SyntheticInstance inst;
  Dataset& ds = inst.dataset;
  ds.x.resize(n, d);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < d; ++j) ds.x(i, j) = gauss(rng);

  IndexList perm(static_cast<std::size_t>(d));
  std::iota(perm.begin(), perm.end(), Index{0});
  std::shuffle(perm.begin(), perm.end(), rng);
  inst.true_support.assign(perm.begin(), perm.begin() + k_true);
  std::sort(inst.true_support.begin(), inst.true_support.end());

  inst.beta = Vector::Zero(d);
  for (Index j : inst.true_support) {
    const double sign = (rng() & 1U) ? 1.0 : -1.0;
    inst.beta[j] = sign * mag(rng);
  }
  ds.y = ds.x * inst.beta;
  if (noise_sigma > 0.0) {
    for (Index i = 0; i < n; ++i) ds.y[i] += noise_sigma * gauss(rng);
  }
  for (Index j = 0; j < d; ++j) ds.feature_names.push_back("x" + std::to_string(j));
  return inst;
}

/// Splits n examples into k_rounds contiguous ranges whose sizes differ by at
/// most one; the larger ranges come first.
inline ShardPlan make_shard_plan(Index n, Index k_rounds) {
  detail::require(k_rounds > 0, "make_shard_plan: k_rounds must be positive");
  detail::require(k_rounds <= n, "make_shard_plan: more rounds than examples");
  ShardPlan plan;
  const Index base = n / k_rounds;
  const Index extra = n % k_rounds;
  Index begin = 0;
  for (Index r = 0; r < k_rounds; ++r) {
    const Index len = base + (r < extra ? 1 : 0);
    plan.round_boundaries.push_back({begin, begin + len});
    begin += len;
  }
  return plan;
}

inline Dataset subset_rows(const Dataset& ds, std::span<const Index> rows) {
  Dataset out;
  out.task = ds.task;
  out.num_classes = ds.num_classes;
  out.feature_names = ds.feature_names;
  out.norm_meta = ds.norm_meta;
  out.x.resize(static_cast<Index>(rows.size()), ds.d());
  out.y.resize(static_cast<Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.x.row(static_cast<Index>(i)) = ds.x.row(rows[i]);
    out.y[static_cast<Index>(i)] = ds.y[rows[i]];
  }
  return out;
}

inline Dataset subset_columns(const Dataset& ds, std::span<const Index> cols) {
  Dataset out;
  out.task = ds.task;
  out.num_classes = ds.num_classes;
  out.y = ds.y;
  out.x = select_columns(ds.x, cols);
  for (Index c : cols) {
    if (static_cast<std::size_t>(c) < ds.feature_names.size())
      out.feature_names.push_back(ds.feature_names[static_cast<std::size_t>(c)]);
  }
  return out;
}

/// Seeded shuffle, then the first (1 - holdout_fraction) share is training.
inline std::pair<Dataset, Dataset> train_validation_split(const Dataset& ds, double holdout_fraction,
                                                          std::uint64_t seed) {
  detail::require(holdout_fraction > 0.0 && holdout_fraction < 1.0, "holdout_fraction must be in (0, 1)");
  IndexList order(static_cast<std::size_t>(ds.n()));
  std::iota(order.begin(), order.end(), Index{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  auto n_val = static_cast<std::size_t>(std::llround(holdout_fraction * static_cast<double>(ds.n())));
  n_val = std::clamp<std::size_t>(n_val, 1, order.size() - 1);
  const std::span<const Index> all(order);
  return {subset_rows(ds, all.first(order.size() - n_val)), subset_rows(ds, all.last(n_val))};
}

/// "<n>x<d>:<fnv1a-64 hex>" over shape, X (row-major) and y bit patterns.
inline std::string fingerprint(const Matrix& x, const Vector& y) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const void* p, std::size_t len) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < len; ++i) {
      h ^= b[i];
      h *= 1099511628211ULL;
    }
  };
  const std::int64_t dims[2] = {x.rows(), x.cols()};
  mix(dims, sizeof dims);
  for (Index i = 0; i < x.rows(); ++i) {
    for (Index j = 0; j < x.cols(); ++j) {
      const double v = x(i, j);
      mix(&v, sizeof v);
    }
    if (i < y.size()) {
      const double yi = y[i];
      mix(&yi, sizeof yi);
    }
  }
  std::ostringstream os;
  os << x.rows() << 'x' << x.cols() << ':' << std::hex;
  os.width(16);
  os.fill('0');
  os << h;
  return os.str();
}

inline std::string fingerprint(const Dataset& ds) { return fingerprint(ds.x, ds.y); }

}  // namespace seqattn
