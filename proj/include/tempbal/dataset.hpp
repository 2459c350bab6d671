#ifndef TEMPBAL_DATASET_HPP_
#define TEMPBAL_DATASET_HPP_

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tempbal/error.hpp"
#include "tempbal/util.hpp"

namespace tempbal {

enum class DatasetKind { kGaussianMixture, kCsv };

struct DatasetSpec {
  DatasetKind kind = DatasetKind::kGaussianMixture;
  // Gaussian mixture
  int classes = 2;
  int dims = 16;
  int samples = 1000;
  double separation = 4.0;  // norm of each class mean
  double noise = 1.0;       // per-coordinate std around the mean
  // CSV
  std::string csv_path;
  std::string label_column = "label";

  double train_fraction = 0.8;
};

struct Dataset {
  Eigen::MatrixXd train_x;  // one example per row
  Eigen::VectorXi train_y;
  Eigen::MatrixXd eval_x;
  Eigen::VectorXi eval_y;
  int classes = 0;
  std::vector<std::string> class_names;

  Eigen::Index dims() const { return train_x.cols(); }
};

namespace detail {

inline Dataset split_dataset(const Eigen::MatrixXd& x, const Eigen::VectorXi& y, int classes,
                             double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw UsageError("train_fraction must lie in (0, 1)");
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(x.rows()));
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed ^ 0x5eed5a1177ull);
  std::shuffle(idx.begin(), idx.end(), rng);
  const auto n_train = static_cast<Eigen::Index>(std::llround(train_fraction * static_cast<double>(x.rows())));
  if (n_train < 1 || n_train >= x.rows()) throw DataError("dataset too small for a train/eval split");

  Dataset d;
  d.classes = classes;
  d.train_x.resize(n_train, x.cols());
  d.train_y.resize(n_train);
  d.eval_x.resize(x.rows() - n_train, x.cols());
  d.eval_y.resize(x.rows() - n_train);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const Eigen::Index src = idx[static_cast<std::size_t>(i)];
    if (i < n_train) {
      d.train_x.row(i) = x.row(src);
      d.train_y[i] = y[src];
    } else {
      d.eval_x.row(i - n_train) = x.row(src);
      d.eval_y[i - n_train] = y[src];
    }
  }
  std::vector<int> per_class(static_cast<std::size_t>(classes), 0);
  for (Eigen::Index i = 0; i < d.train_y.size(); ++i) per_class[static_cast<std::size_t>(d.train_y[i])]++;
  for (int c = 0; c < classes; ++c)
    if (per_class[static_cast<std::size_t>(c)] == 0)
      throw DataError("empty class " + std::to_string(c) + " in the training split");
  return d;
}

inline Dataset make_gaussian_mixture(const DatasetSpec& spec, std::uint64_t seed) {
  if (spec.classes < 2) throw UsageError("classes must be >= 2");
  if (spec.dims < 1) throw UsageError("dims must be >= 1");
  if (spec.noise < 0.0) throw UsageError("noise must be >= 0");
  if (spec.samples / spec.classes < 1) throw DataError("empty class: fewer samples than classes");

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::MatrixXd means(spec.classes, spec.dims);
  for (int c = 0; c < spec.classes; ++c) {
    Eigen::VectorXd dir(spec.dims);
    for (int j = 0; j < spec.dims; ++j) dir[j] = gauss(rng);
    means.row(c) = spec.separation * dir.normalized();
  }
  Eigen::MatrixXd x(spec.samples, spec.dims);
  Eigen::VectorXi y(spec.samples);
  for (int i = 0; i < spec.samples; ++i) {
    const int c = i % spec.classes;
    y[i] = c;
    for (int j = 0; j < spec.dims; ++j) x(i, j) = means(c, j) + spec.noise * gauss(rng);
  }
  Dataset d = split_dataset(x, y, spec.classes, spec.train_fraction, seed);
  for (int c = 0; c < spec.classes; ++c) d.class_names.push_back(std::to_string(c));
  return d;
}

inline Dataset make_csv_dataset(const DatasetSpec& spec, std::uint64_t seed) {
  std::ifstream in(spec.csv_path);
  if (!in) throw DataError("cannot open CSV '" + spec.csv_path + "'");
  std::string line;
  if (!std::getline(in, line)) throw DataError("CSV '" + spec.csv_path + "' is empty");
  std::vector<std::string> header = split(std::string(trim(line)), ',');
  for (auto& h : header) h = std::string(trim(h));

  long long label_idx = -1;
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == spec.label_column) label_idx = static_cast<long long>(i);
  if (label_idx < 0) {
    long long as_index = 0;
    if (parse_int(spec.label_column, as_index) && as_index >= 0 && as_index < static_cast<long long>(header.size()))
      label_idx = as_index;
    else
      throw DataError("CSV has no label column '" + spec.label_column + "'");
  }
  if (header.size() < 2) throw DataError("CSV needs at least one feature column");

  std::vector<std::vector<double>> rows;
  std::vector<std::string> labels;
  long row_no = 1;  // header is row 1
  while (std::getline(in, line)) {
    ++row_no;
    if (trim(line).empty()) continue;
    auto fields = split(std::string(trim(line)), ',');
    if (fields.size() != header.size())
      throw DataError("CSV row " + std::to_string(row_no) + ": expected " + std::to_string(header.size()) +
                      " fields, got " + std::to_string(fields.size()));
    std::vector<double> feat;
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (static_cast<long long>(i) == label_idx) {
        auto label = std::string(trim(fields[i]));
        if (label.empty()) throw DataError("CSV row " + std::to_string(row_no) + ": missing label value");
        labels.push_back(std::move(label));
        continue;
      }
      double v = 0.0;
      if (!parse_double(fields[i], v))
        throw DataError("CSV row " + std::to_string(row_no) + ": non-numeric value in column '" + header[i] + "'");
      feat.push_back(v);
    }
    rows.push_back(std::move(feat));
  }
  if (rows.empty()) throw DataError("CSV '" + spec.csv_path + "' has no data rows");

  std::map<std::string, int> class_of;
  for (const auto& l : labels) class_of.emplace(l, 0);
  int next = 0;
  std::vector<std::string> names;
  for (auto& [name, id] : class_of) {
    id = next++;
    names.push_back(name);
  }
  if (class_of.size() < 2) throw DataError("CSV needs at least two distinct labels");

  Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
  Eigen::VectorXi y(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j) x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    y[static_cast<Eigen::Index>(i)] = class_of.at(labels[i]);
  }
  Dataset d = split_dataset(x, y, static_cast<int>(class_of.size()), spec.train_fraction, seed);
  d.class_names = std::move(names);
  return d;
}

}  // namespace detail

inline Dataset make_dataset(const DatasetSpec& spec, std::uint64_t seed) {
  switch (spec.kind) {
    case DatasetKind::kGaussianMixture:
      return detail::make_gaussian_mixture(spec, seed);
    case DatasetKind::kCsv:
      return detail::make_csv_dataset(spec, seed);
  }
  throw UsageError("unknown dataset kind");
}

// Index lists of one epoch's minibatches, shuffled deterministically by
// (seed, epoch).
inline std::vector<std::vector<Eigen::Index>> epoch_batches(Eigen::Index examples, int batch_size,
                                                            std::uint64_t seed, int epoch) {
  if (batch_size < 1) throw UsageError("batch_size must be >= 1");
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(examples));
  std::iota(idx.begin(), idx.end(), 0);
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch)};
  std::mt19937_64 rng(seq);
  std::shuffle(idx.begin(), idx.end(), rng);
  std::vector<std::vector<Eigen::Index>> out;
  for (std::size_t start = 0; start < idx.size(); start += static_cast<std::size_t>(batch_size)) {
    auto end = std::min(idx.size(), start + static_cast<std::size_t>(batch_size));
    out.emplace_back(idx.begin() + static_cast<std::ptrdiff_t>(start), idx.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

}  // namespace tempbal

#endif  // TEMPBAL_DATASET_HPP_
