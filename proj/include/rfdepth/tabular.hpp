#pragma once

// Data model, IDX and delimited-text ingestion, train/validation/test
// sampling, and sweep-result CSV serialization.

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <tuple>
#include <utility>
#include <vector>

#include "rfdepth/errors.hpp"
#include "rfdepth/rng.hpp"

namespace rfdepth {

enum class Task { Regression, Classification };

inline const char* to_string(Task t) {
  return t == Task::Regression ? "regression" : "classification";
}

/// n x p matrix of finite reals (row-major) plus a response vector.
///
/// Classification labels are stored as exact integers 0..K-1 in the
/// response vector so that both tasks share one storage layout.
class Dataset {
 public:
  Dataset(std::vector<double> features, std::size_t p, std::vector<double> response, Task task,
          std::size_t n_classes = 0, std::vector<std::string> feature_names = {})
      : features_(std::move(features)),
        response_(std::move(response)),
        names_(std::move(feature_names)),
        p_(p),
        task_(task),
        n_classes_(n_classes) {
    if (response_.empty()) throw EmptyDatasetError("dataset has no rows");
    if (p_ == 0) throw DomainError("dataset has no features");
    if (features_.size() != response_.size() * p_)
      throw ConsistencyError("feature matrix size does not match n*p");
    if (!names_.empty() && names_.size() != p_)
      throw ConsistencyError("feature_names length does not match p");
    for (double v : features_)
      if (!std::isfinite(v)) throw DomainError("non-finite feature value");
    if (task_ == Task::Regression) {
      for (double v : response_)
        if (!std::isfinite(v)) throw DomainError("non-finite regression response");
      n_classes_ = 0;
    } else {
      if (n_classes_ < 2) throw DomainError("classification needs at least 2 classes");
      for (double v : response_) {
        if (!(v >= 0.0) || v != std::floor(v) || v >= static_cast<double>(n_classes_))
          throw DomainError("class label outside 0..K-1");
      }
    }
  }

  std::size_t n() const noexcept { return response_.size(); }
  std::size_t p() const noexcept { return p_; }
  Task task() const noexcept { return task_; }
  std::size_t n_classes() const noexcept { return n_classes_; }

  std::span<const double> row(std::size_t i) const { return {features_.data() + i * p_, p_}; }
  double at(std::size_t i, std::size_t j) const { return features_[i * p_ + j]; }
  std::span<const double> features() const noexcept { return features_; }
  std::span<const double> response() const noexcept { return response_; }
  const std::vector<std::string>& feature_names() const noexcept { return names_; }

  /// Rows at `indices`, in that order (duplicates allowed).
  Dataset subset(std::span<const std::size_t> indices) const {
    std::vector<double> x;
    std::vector<double> y;
    x.reserve(indices.size() * p_);
    y.reserve(indices.size());
    for (std::size_t i : indices) {
      if (i >= n()) throw DomainError("subset index out of range");
      auto r = row(i);
      x.insert(x.end(), r.begin(), r.end());
      y.push_back(response_[i]);
    }
    return Dataset(std::move(x), p_, std::move(y), task_, n_classes_, names_);
  }

  /// Same rows with the response reinterpreted under another task.
  /// Regression -> classification requires integer labels.
  Dataset with_task(Task task, std::size_t n_classes = 0) const {
    if (task == Task::Classification && n_classes == 0) {
      double top = 0.0;
      for (double v : response_) top = std::max(top, v);
      n_classes = std::max<std::size_t>(2, static_cast<std::size_t>(top) + 1);
    }
    return Dataset(features_, p_, response_, task, n_classes, names_);
  }

 private:
  std::vector<double> features_;
  std::vector<double> response_;
  std::vector<std::string> names_;
  std::size_t p_;
  Task task_;
  std::size_t n_classes_;
};

namespace detail {

inline std::vector<unsigned char> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::uint32_t read_be32(const std::vector<unsigned char>& bytes, std::size_t offset,
                               const std::string& path) {
  if (bytes.size() < offset + 4)
    throw IoError(path + ": truncated at byte offset " + std::to_string(bytes.size()), bytes.size());
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

}  // namespace detail

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

/// Loads an IDX image/label file pair. Pixels stay raw 0-255 reals; the
/// digit label is the classification response.
inline Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
  const auto img = detail::read_file_bytes(images_path);
  const auto lab = detail::read_file_bytes(labels_path);

  const std::uint32_t img_magic = detail::read_be32(img, 0, images_path);
  if (img_magic != kIdxImageMagic)
    throw FormatError(images_path + ": bad image magic " + std::to_string(img_magic));
  const std::uint32_t lab_magic = detail::read_be32(lab, 0, labels_path);
  if (lab_magic != kIdxLabelMagic)
    throw FormatError(labels_path + ": bad label magic " + std::to_string(lab_magic));

  const std::size_t count = detail::read_be32(img, 4, images_path);
  const std::size_t rows = detail::read_be32(img, 8, images_path);
  const std::size_t cols = detail::read_be32(img, 12, images_path);
  const std::size_t label_count = detail::read_be32(lab, 4, labels_path);
  if (count != label_count)
    throw ConsistencyError("image count " + std::to_string(count) + " != label count " +
                           std::to_string(label_count));
  if (count == 0) throw EmptyDatasetError(images_path + ": header count is 0");
  const std::size_t p = rows * cols;
  if (p == 0) throw FormatError(images_path + ": zero image dimensions");

  const std::size_t img_end = 16 + count * p;
  if (img.size() < img_end)
    throw IoError(images_path + ": truncated at byte offset " + std::to_string(img.size()),
                  img.size());
  if (lab.size() < 8 + count)
    throw IoError(labels_path + ": truncated at byte offset " + std::to_string(lab.size()),
                  lab.size());

  std::vector<double> x(img.begin() + 16, img.begin() + static_cast<std::ptrdiff_t>(img_end));
  std::vector<double> y(lab.begin() + 8, lab.begin() + 8 + static_cast<std::ptrdiff_t>(count));
  double top = 0.0;
  for (double v : y) top = std::max(top, v);
  const std::size_t k = std::max<std::size_t>(10, static_cast<std::size_t>(top) + 1);
  return Dataset(std::move(x), p, std::move(y), Task::Classification, k);
}

/// One-vs-rest relabelling: 1 for `positive_class`, 0 otherwise.
inline Dataset binarize_label(const Dataset& d, std::size_t positive_class) {
  if (d.task() != Task::Classification) throw DomainError("binarize_label needs class labels");
  if (positive_class >= d.n_classes())
    throw DomainError("positive class " + std::to_string(positive_class) + " outside 0.." +
                      std::to_string(d.n_classes() - 1));
  std::vector<double> y(d.n());
  const double pos = static_cast<double>(positive_class);
  std::transform(d.response().begin(), d.response().end(), y.begin(),
                 [pos](double v) { return v == pos ? 1.0 : 0.0; });
  return Dataset({d.features().begin(), d.features().end()}, d.p(), std::move(y),
                 Task::Classification, 2, d.feature_names());
}

struct SplitPlan {
  std::string source;
  std::size_t train = 0;
  std::size_t validation = 0;
  std::size_t test = 0;
  std::uint64_t seed = 0;
};

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
  std::vector<std::size_t> test;
};

/// Index draws behind subsample_splits. Train comes from the train pool;
/// validation and test come disjointly from the test pool.
inline SplitIndices draw_split_indices(std::size_t train_pool, std::size_t test_pool,
                                       const SplitPlan& plan) {
  if (plan.train > train_pool)
    throw CapacityError("train size " + std::to_string(plan.train) + " exceeds pool of " +
                        std::to_string(train_pool));
  if (plan.validation + plan.test > test_pool)
    throw CapacityError("validation+test size " + std::to_string(plan.validation + plan.test) +
                        " exceeds pool of " + std::to_string(test_pool));
  std::vector<std::size_t> a(train_pool), b(test_pool);
  std::iota(a.begin(), a.end(), std::size_t{0});
  std::iota(b.begin(), b.end(), std::size_t{0});
  Rng train_rng(derive_seed(plan.seed, 0));
  Rng held_rng(derive_seed(plan.seed, 1));
  SplitIndices out;
  out.train = train_rng.sample_without_replacement<std::size_t>(a, plan.train);
  auto held = held_rng.sample_without_replacement<std::size_t>(b, plan.validation + plan.test);
  out.validation.assign(held.begin(), held.begin() + static_cast<std::ptrdiff_t>(plan.validation));
  out.test.assign(held.begin() + static_cast<std::ptrdiff_t>(plan.validation), held.end());
  return out;
}

/// Returns (train, validation, test).
inline std::tuple<Dataset, Dataset, Dataset> subsample_splits(const Dataset& d_train,
                                                              const Dataset& d_test,
                                                              const SplitPlan& plan) {
  if (plan.train == 0 || plan.validation == 0 || plan.test == 0)
    throw EmptyDatasetError("split sizes must be positive");
  const auto idx = draw_split_indices(d_train.n(), d_test.n(), plan);
  return {d_train.subset(idx.train), d_test.subset(idx.validation), d_test.subset(idx.test)};
}

// ---------------------------------------------------------------------------
// Delimited text
// ---------------------------------------------------------------------------

namespace detail {

inline double parse_double(std::string_view s, const std::string& where) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw FormatError(where + ": cannot parse number '" + std::string(s) + "'");
  return v;
}

inline std::vector<std::string_view> split_fields(std::string_view line, char delim) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(delim, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

/// Shortest decimal that parses back to exactly `v`.
inline std::string format_double(double v) {
  std::array<char, 32> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), ptr);
}

}  // namespace detail

/// Reads a header-first delimited file whose last column is the response.
inline Dataset read_delimited(const std::string& path, Task task, char delim = ',') {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw EmptyDatasetError(path + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  auto header = detail::split_fields(line, delim);
  if (header.size() < 2) throw FormatError(path + ": need at least one feature and a response");
  const std::size_t p = header.size() - 1;
  std::vector<std::string> names(header.begin(), header.end() - 1);

  std::vector<double> x, y;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = detail::split_fields(line, delim);
    const std::string where = path + ":" + std::to_string(lineno);
    if (fields.size() != p + 1)
      throw FormatError(where + ": expected " + std::to_string(p + 1) + " fields");
    for (std::size_t j = 0; j < p; ++j) x.push_back(detail::parse_double(fields[j], where));
    y.push_back(detail::parse_double(fields[p], where));
  }
  if (y.empty()) throw EmptyDatasetError(path + ": no data rows");
  std::size_t k = 0;
  if (task == Task::Classification) {
    double top = 0.0;
    for (double v : y) top = std::max(top, v);
    k = std::max<std::size_t>(2, static_cast<std::size_t>(top) + 1);
  }
  return Dataset(std::move(x), p, std::move(y), task, k, std::move(names));
}

inline void write_delimited(const Dataset& d, const std::string& path, char delim = ',') {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  for (std::size_t j = 0; j < d.p(); ++j) {
    out << (d.feature_names().empty() ? "x" + std::to_string(j + 1) : d.feature_names()[j]) << delim;
  }
  out << "y\n";
  for (std::size_t i = 0; i < d.n(); ++i) {
    for (double v : d.row(i)) out << detail::format_double(v) << delim;
    out << detail::format_double(d.response()[i]) << '\n';
  }
  if (!out) throw IoError("write failed for " + path);
}

// ---------------------------------------------------------------------------
// Sweep results
// ---------------------------------------------------------------------------

/// One aggregated grid point. Absent optionals render as `NA`.
struct SweepResult {
  std::string experiment;
  std::string setting;
  std::optional<double> snr;
  std::optional<std::size_t> mtry;
  std::optional<std::size_t> maxnodes;  // nullopt: unlimited
  std::optional<std::size_t> nodesize;
  std::optional<std::size_t> n_trees;
  std::size_t rep_count = 0;
  double mean_train_loss = 0.0;
  double mean_test_loss = 0.0;
  double se_test_loss = 0.0;

  bool operator==(const SweepResult&) const = default;
};

inline constexpr std::string_view kResultsHeader =
    "experiment,setting,snr,mtry,maxnodes,nodesize,n_trees,rep_count,mean_train_loss,"
    "mean_test_loss,se_test_loss";

inline std::string format_results_csv(std::span<const SweepResult> rows) {
  auto opt_size = [](const std::optional<std::size_t>& v) {
    return v ? std::to_string(*v) : std::string("NA");
  };
  std::string out(kResultsHeader);
  out += '\n';
  for (const auto& r : rows) {
    for (std::string_view s : {std::string_view(r.experiment), std::string_view(r.setting)}) {
      if (s.find_first_of(",\n\r\"") != std::string_view::npos)
        throw DomainError("result label contains a delimiter: " + std::string(s));
    }
    out += r.experiment + ',' + r.setting + ',';
    out += (r.snr ? detail::format_double(*r.snr) : "NA") + ',';
    out += opt_size(r.mtry) + ',' + opt_size(r.maxnodes) + ',' + opt_size(r.nodesize) + ',' +
           opt_size(r.n_trees) + ',';
    out += std::to_string(r.rep_count) + ',';
    out += detail::format_double(r.mean_train_loss) + ',' + detail::format_double(r.mean_test_loss) +
           ',' + detail::format_double(r.se_test_loss) + '\n';
  }
  return out;
}

inline void write_results_csv(std::span<const SweepResult> rows, const std::string& path) {
  const std::string text = format_results_csv(rows);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw IoError("write failed for " + path);
}

inline std::vector<SweepResult> parse_results_csv(std::string_view text) {
  std::vector<SweepResult> rows;
  std::size_t pos = text.find('\n');
  if (pos == std::string_view::npos || text.substr(0, pos) != kResultsHeader)
    throw FormatError("results CSV header mismatch");
  ++pos;
  std::size_t lineno = 1;
  while (pos < text.size()) {
    ++lineno;
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    auto line = text.substr(pos, end - pos);
    pos = end + 1;
    if (line.empty()) continue;
    const std::string where = "results line " + std::to_string(lineno);
    auto f = detail::split_fields(line, ',');
    if (f.size() != 11) throw FormatError(where + ": expected 11 fields");
    auto opt_size = [&](std::string_view s) -> std::optional<std::size_t> {
      if (s == "NA") return std::nullopt;
      return static_cast<std::size_t>(detail::parse_double(s, where));
    };
    SweepResult r;
    r.experiment = std::string(f[0]);
    r.setting = std::string(f[1]);
    if (f[2] != "NA") r.snr = detail::parse_double(f[2], where);
    r.mtry = opt_size(f[3]);
    r.maxnodes = opt_size(f[4]);
    r.nodesize = opt_size(f[5]);
    r.n_trees = opt_size(f[6]);
    r.rep_count = static_cast<std::size_t>(detail::parse_double(f[7], where));
    r.mean_train_loss = detail::parse_double(f[8], where);
    r.mean_test_loss = detail::parse_double(f[9], where);
    r.se_test_loss = detail::parse_double(f[10], where);
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace rfdepth
