#ifndef TEMPBAL_ESD_HPP_
#define TEMPBAL_ESD_HPP_

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tempbal/error.hpp"
#include "tempbal/weight_store.hpp"

namespace tempbal {

// A layer weight reshaped to 2-D and transposed if needed so rows <= cols.
struct OrientedMatrix {
  Eigen::MatrixXd values;  // n x m, n <= m
  std::string source_name;
  bool transposed = false;

  Eigen::Index n() const { return values.rows(); }
  Eigen::Index m() const { return values.cols(); }
};

// Ascending eigenvalues of the layer correlation matrix.
struct Esd {
  std::vector<double> eigenvalues;
  std::string source_name;
  Eigen::Index n = 0;
  Eigen::Index m = 0;

  double max() const { return eigenvalues.back(); }
};

// Conv tensors (out, in, kh, kw) flatten to out x (in*kh*kw).
inline OrientedMatrix orient(const LayerTensor& layer) {
  if (layer.dims.size() != 2 && layer.dims.size() != 4)
    throw DataError("layer '" + layer.name + "': expected 2 or 4 dims, got " +
                     std::to_string(layer.dims.size()));
  for (auto d : layer.dims)
    if (d == 0) throw DataError("layer '" + layer.name + "': zero dimension");
  if (layer.element_count() != layer.values.size())
    throw DataError("layer '" + layer.name + "': dims do not match value count");

  const auto rows = static_cast<Eigen::Index>(layer.dims[0]);
  const auto cols = static_cast<Eigen::Index>(layer.element_count() / layer.dims[0]);
  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Eigen::Map<const RowMajor> w(layer.values.data(), rows, cols);

  OrientedMatrix out;
  out.source_name = layer.name;
  if (rows > cols) {
    out.values = w.transpose();
    out.transposed = true;
  } else {
    out.values = w;
  }
  return out;
}

inline OrientedMatrix orient(Eigen::MatrixXd w, std::string name = {}) {
  OrientedMatrix out;
  out.source_name = std::move(name);
  if (w.rows() > w.cols()) {
    out.values = w.transpose();
    out.transposed = true;
  } else {
    out.values = std::move(w);
  }
  return out;
}

// Squared singular values of W, i.e. the n eigenvalues of W W^T, ascending.
inline Esd compute_esd(const OrientedMatrix& mat) {
  if (!mat.values.allFinite())
    throw NumericalError("layer '" + mat.source_name + "': non-finite weight entries");

  Eigen::VectorXd sv;
  if (mat.values.size() == 0) {
    sv.resize(0);
  } else {
    Eigen::BDCSVD<Eigen::MatrixXd> svd(mat.values);
    sv = svd.singularValues();
  }

  Esd esd;
  esd.source_name = mat.source_name;
  esd.n = mat.n();
  esd.m = mat.m();
  esd.eigenvalues.resize(static_cast<std::size_t>(sv.size()));
  for (Eigen::Index i = 0; i < sv.size(); ++i) esd.eigenvalues[i] = sv[i] * sv[i];
  std::sort(esd.eigenvalues.begin(), esd.eigenvalues.end());

  // Roundoff below zero is clamped; anything larger signals a broken solve.
  const double top = esd.eigenvalues.empty() ? 0.0 : std::abs(esd.eigenvalues.back());
  for (double& v : esd.eigenvalues) {
    if (v < 0.0) {
      if (-v < 1e-12 * top) {
        v = 0.0;
      } else {
        throw NumericalError("layer '" + mat.source_name + "': negative eigenvalue " + std::to_string(v));
      }
    }
  }
  return esd;
}

inline Esd compute_esd(const LayerTensor& layer) { return compute_esd(orient(layer)); }

}  // namespace tempbal

#endif  // TEMPBAL_ESD_HPP_
