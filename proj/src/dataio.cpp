#include "ctnreg/dataio.hpp"

#include "ctnreg/error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

namespace ctnreg {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(trim(std::string_view(line).substr(start, comma - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

std::optional<double> parse_real(const std::string& field) {
  double v = 0.0;
  const char* begin = field.data();
  const char* end = begin + field.size();
  if (begin != end && *begin == '+') ++begin;
  const auto [ptr, ec] = std::from_chars(begin, end, v);
  if (ec != std::errc() || ptr != end) return std::nullopt;
  return v;
}

std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

[[noreturn]] void csv_error(const std::filesystem::path& path, std::size_t line, const std::string& msg) {
  throw Error(ErrorKind::kInvalidInput, path.string() + ":" + std::to_string(line) + ": " + msg);
}

std::ofstream open_for_write(const std::filesystem::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::kIo, "cannot open " + path.string() + " for writing");
  return out;
}

void finish_write(std::ofstream& out, const std::filesystem::path& path) {
  out.flush();
  if (!out) throw Error(ErrorKind::kIo, "write to " + path.string() + " failed");
}

}  // namespace

std::vector<Index> Dataset::labels() const {
  std::vector<Index> out(static_cast<std::size_t>(y.rows()), 0);
  for (Index i = 0; i < y.rows(); ++i) {
    Index k = 0;
    y.row(i).maxCoeff(&k);
    out[static_cast<std::size_t>(i)] = k;
  }
  return out;
}

Dataset Dataset::subset(std::span<const Index> rows) const {
  Dataset out;
  out.x.resize(static_cast<Index>(rows.size()), x.cols());
  out.y.resize(static_cast<Index>(rows.size()), y.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= x.rows()) throw Error(ErrorKind::kInvalidInput, "row index out of range");
    out.x.row(static_cast<Index>(i)) = x.row(rows[i]);
    out.y.row(static_cast<Index>(i)) = y.row(rows[i]);
  }
  out.class_names = class_names;
  out.tensor_shape = tensor_shape;
  return out;
}

void Dataset::validate() const {
  if (x.rows() != y.rows()) throw Error(ErrorKind::kInvalidInput, "dataset: x and y row counts differ");
  require_finite(x, "dataset features");
  for (Index i = 0; i < y.rows(); ++i) {
    const double ones = (y.row(i).array() == 1.0).count();
    const double zeros = (y.row(i).array() == 0.0).count();
    if (ones != 1 || ones + zeros != y.cols()) {
      throw Error(ErrorKind::kInvalidInput, "dataset: label row " + std::to_string(i) + " is not one-hot");
    }
  }
  if (!class_names.empty() && static_cast<Index>(class_names.size()) != y.cols()) {
    throw Error(ErrorKind::kInvalidInput, "dataset: class name count differs from label width");
  }
  if (tensor_shape) {
    const Index prod = std::accumulate(tensor_shape->begin(), tensor_shape->end(), Index{1},
                                       std::multiplies<>());
    if (prod != x.cols()) throw Error(ErrorKind::kInvalidInput, "dataset: tensor shape product != m");
  }
}

Matrix one_hot(std::span<const Index> labels, Index classes) {
  Matrix y = Matrix::Zero(static_cast<Index>(labels.size()), classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= classes) throw Error(ErrorKind::kInvalidInput, "label out of range");
    y(static_cast<Index>(i), labels[i]) = 1.0;
  }
  return y;
}

// ---------------------------------------------------------------------------

Dataset load_csv(const std::filesystem::path& path, const LabelColumn& label_column,
                 bool has_header, const std::vector<std::string>* known_classes) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path.string());

  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  if (has_header) {
    while (std::getline(in, line)) {
      ++line_no;
      if (!trim(line).empty()) {
        header = split_fields(line);
        break;
      }
    }
  }

  std::vector<std::string> classes = known_classes ? *known_classes : std::vector<std::string>{};
  std::map<std::string, Index> class_index;
  for (std::size_t k = 0; k < classes.size(); ++k) class_index[classes[k]] = static_cast<Index>(k);

  std::optional<std::size_t> width = header.empty() ? std::nullopt : std::optional(header.size());
  std::optional<std::size_t> label_pos;
  auto resolve_label = [&](std::size_t cols) {
    if (const auto* name = std::get_if<std::string>(&label_column)) {
      auto it = std::find(header.begin(), header.end(), *name);
      if (it == header.end()) {
        throw Error(ErrorKind::kInvalidInput, path.string() + ": no column named '" + *name + "'");
      }
      return static_cast<std::size_t>(it - header.begin());
    }
    Index idx = std::get<Index>(label_column);
    if (idx < 0) idx += static_cast<Index>(cols);
    if (idx < 0 || idx >= static_cast<Index>(cols)) {
      throw Error(ErrorKind::kInvalidInput, path.string() + ": label column index out of range");
    }
    return static_cast<std::size_t>(idx);
  };
  if (width) label_pos = resolve_label(*width);

  std::vector<double> values;
  std::vector<Index> labels;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_fields(line);
    if (!width) {
      width = fields.size();
      label_pos = resolve_label(*width);
    }
    if (fields.size() != *width) {
      csv_error(path, line_no, "expected " + std::to_string(*width) + " fields, found " +
                                   std::to_string(fields.size()));
    }
    for (std::size_t j = 0; j < fields.size(); ++j) {
      if (j == *label_pos) continue;
      const auto v = parse_real(fields[j]);
      if (!v) csv_error(path, line_no, "non-numeric feature '" + fields[j] + "'");
      values.push_back(*v);
    }
    const std::string& label = fields[*label_pos];
    auto it = class_index.find(label);
    if (it == class_index.end()) {
      if (known_classes) csv_error(path, line_no, "label '" + label + "' was not seen in training data");
      it = class_index.emplace(label, static_cast<Index>(classes.size())).first;
      classes.push_back(label);
    }
    labels.push_back(it->second);
  }

  Dataset d;
  const Index n = static_cast<Index>(labels.size());
  const Index m = width ? static_cast<Index>(*width) - 1 : 0;
  d.x.resize(n, m);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < m; ++j) d.x(i, j) = values[static_cast<std::size_t>(i * m + j)];
  }
  d.y = one_hot(labels, static_cast<Index>(classes.size()));
  d.class_names = std::move(classes);
  d.validate();
  return d;
}

void write_csv(const Dataset& data, const std::filesystem::path& path) {
  data.validate();
  auto out = open_for_write(path);
  for (Index j = 0; j < data.features(); ++j) out << 'x' << j << ',';
  out << "label\n";
  const auto labels = data.labels();
  for (Index i = 0; i < data.samples(); ++i) {
    for (Index j = 0; j < data.features(); ++j) out << format_real(data.x(i, j)) << ',';
    const Index k = labels[static_cast<std::size_t>(i)];
    if (data.class_names.empty()) {
      out << k << '\n';
    } else {
      out << data.class_names[static_cast<std::size_t>(k)] << '\n';
    }
  }
  finish_write(out, path);
}

void export_features(const Matrix& features, std::span<const Index> labels,
                     const std::filesystem::path& path) {
  if (static_cast<Index>(labels.size()) != features.rows()) {
    throw Error(ErrorKind::kInvalidInput, "export_features: one label per feature row required");
  }
  auto out = open_for_write(path);
  for (Index j = 0; j < features.cols(); ++j) out << 'f' << j << ',';
  out << "label\n";
  for (Index i = 0; i < features.rows(); ++i) {
    for (Index j = 0; j < features.cols(); ++j) out << format_real(features(i, j)) << ',';
    out << labels[static_cast<std::size_t>(i)] << '\n';
  }
  finish_write(out, path);
}

// ---------------------------------------------------------------------------

Matrix Standardizer::apply(const Matrix& x) const {
  if (x.cols() != mean.size()) throw Error(ErrorKind::kInvalidInput, "standardizer: feature count mismatch");
  return ((x.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array()).matrix();
}

Dataset Standardizer::apply(const Dataset& d) const {
  Dataset out = d;
  out.x = apply(d.x);
  return out;
}

std::pair<Dataset, Standardizer> standardize(const Dataset& d) {
  if (d.samples() < 2) throw Error(ErrorKind::kInvalidInput, "standardize: need at least two samples");
  Standardizer t;
  t.mean = d.x.colwise().mean().transpose();
  const Matrix centred = d.x.rowwise() - t.mean.transpose();
  t.scale = (centred.colwise().squaredNorm() / static_cast<double>(d.samples())).cwiseSqrt().transpose();
  for (Index j = 0; j < t.scale.size(); ++j) {
    if (!(t.scale(j) > 0.0)) t.scale(j) = 1.0;
  }
  return {t.apply(d), t};
}

std::pair<Dataset, Dataset> split(const Dataset& d, const SplitSpec& spec) {
  std::vector<Index> train;
  std::vector<Index> test;
  if (spec.train_fraction) {
    const double f = *spec.train_fraction;
    if (!(f > 0.0 && f < 1.0)) throw Error(ErrorKind::kInvalidInput, "split: fraction must lie in (0, 1)");
    std::mt19937_64 rng(spec.seed);
    const auto labels = d.labels();
    for (Index k = 0; k < d.classes(); ++k) {
      std::vector<Index> members;
      for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] == k) members.push_back(static_cast<Index>(i));
      }
      if (members.empty()) continue;
      if (members.size() < 2) {
        throw Error(ErrorKind::kInvalidInput,
                    "split: class " + std::to_string(k) + " has fewer than 2 samples");
      }
      std::shuffle(members.begin(), members.end(), rng);
      const auto count = static_cast<Index>(members.size());
      const Index n_train = std::clamp<Index>(std::llround(f * static_cast<double>(count)), 1, count - 1);
      train.insert(train.end(), members.begin(), members.begin() + n_train);
      test.insert(test.end(), members.begin() + n_train, members.end());
    }
    std::sort(train.begin(), train.end());
    std::sort(test.begin(), test.end());
  } else {
    train = spec.train_indices;
    test = spec.test_indices;
    std::vector<char> seen(static_cast<std::size_t>(d.samples()), 0);
    for (const auto* list : {&train, &test}) {
      for (Index i : *list) {
        if (i < 0 || i >= d.samples()) throw Error(ErrorKind::kInvalidInput, "split: index out of range");
        if (seen[static_cast<std::size_t>(i)]++) {
          throw Error(ErrorKind::kInvalidInput, "split: train and test indices overlap or repeat");
        }
      }
    }
  }
  return {d.subset(train), d.subset(test)};
}

// ---------------------------------------------------------------------------

Dataset gen_synthetic_lowrank(const SyntheticSpec& spec) {
  constexpr double kLatentSpread = 0.3;
  constexpr double kMeanScale = 0.3;
  const Index n = spec.n_per_class * spec.classes;
  if (spec.classes < 2 || spec.n_per_class < 1 || spec.features < 1 || spec.rank < 1) {
    throw Error(ErrorKind::kInvalidInput, "gen_synthetic_lowrank: sizes must be positive with c >= 2");
  }
  if (spec.rank >= std::min(spec.features, n)) {
    throw Error(ErrorKind::kInvalidInput, "gen_synthetic_lowrank: need rank < min(m, c * n_per_class)");
  }
  if (!(spec.noise_sigma >= 0.0) || !std::isfinite(spec.noise_sigma)) {
    throw Error(ErrorKind::kInvalidInput, "gen_synthetic_lowrank: noise_sigma must be >= 0");
  }

  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto draw = [&](Index rows, Index cols) {
    Matrix m(rows, cols);
    for (Index j = 0; j < cols; ++j) {
      for (Index i = 0; i < rows; ++i) m(i, j) = normal(rng);
    }
    return m;
  };

  const Matrix mixing = draw(spec.rank, spec.features) / std::sqrt(static_cast<double>(spec.rank));
  const Matrix means = kMeanScale * draw(spec.classes, spec.rank);
  Matrix latent(n, spec.rank);
  std::vector<Index> labels(static_cast<std::size_t>(n));
  for (Index k = 0; k < spec.classes; ++k) {
    for (Index i = 0; i < spec.n_per_class; ++i) {
      const Index row = k * spec.n_per_class + i;
      latent.row(row) = means.row(k) + kLatentSpread * draw(1, spec.rank);
      labels[static_cast<std::size_t>(row)] = k;
    }
  }
  Dataset d;
  d.x = latent * mixing;
  if (spec.noise_sigma > 0.0) d.x += spec.noise_sigma * draw(n, spec.features);
  d.y = one_hot(labels, spec.classes);
  for (Index k = 0; k < spec.classes; ++k) d.class_names.push_back(std::to_string(k));
  return d;
}

}  // namespace ctnreg
