#pragma once

#include "foodprice/common.hpp"

#include <Eigen/QR>

#include <cmath>
#include <string>
#include <vector>

namespace foodprice {

struct LinearModel {
  Vector weights;
  double bias = 0.0;
  double regularization = 0.0;  // 0 for ordinary least squares

  Vector predict(const Matrix& x) const {
    if (x.cols() != weights.size())
      throw Error(ErrorCode::shape, "linear model expects " + std::to_string(weights.size()) + " columns");
    return (x * weights).array() + bias;
  }
};

/// Least squares with an intercept, solved by column-pivoted Householder QR
/// on the augmented design [1 | X].
inline LinearModel fit_ols(const Matrix& x, const Vector& y, const std::vector<std::string>& names = {}) {
  if (x.rows() != y.size()) throw Error(ErrorCode::shape, "x and y row counts differ");
  if (x.rows() < x.cols() + 1)
    throw Error(ErrorCode::singular_design, "need at least " + std::to_string(x.cols() + 1) + " rows for " +
                                                std::to_string(x.cols()) + " features plus intercept");
  Matrix design(x.rows(), x.cols() + 1);
  design.col(0).setOnes();
  design.rightCols(x.cols()) = x;

  Eigen::ColPivHouseholderQR<Matrix> qr(design);
  qr.setThreshold(1e-10);
  if (qr.rank() < design.cols()) {
    std::string dependent;
    const auto& perm = qr.colsPermutation().indices();
    for (Index k = qr.rank(); k < design.cols(); ++k) {
      const Index c = perm[k];
      if (!dependent.empty()) dependent += ", ";
      if (c == 0) {
        dependent += "intercept";
      } else {
        const Index f = c - 1;
        dependent += f < static_cast<Index>(names.size()) ? names[f] : "column " + std::to_string(f);
      }
    }
    throw Error(ErrorCode::singular_design, "rank " + std::to_string(qr.rank()) + " < " +
                                                std::to_string(design.cols()) + "; dependent: " + dependent);
  }
  const Vector beta = qr.solve(y);
  LinearModel m;
  m.bias = beta[0];
  m.weights = beta.tail(x.cols());
  return m;
}

/// Ridge with an unpenalized intercept: w solves (Xc'Xc + lambda I) w = Xc'yc
/// on centred data, bias = mean(y) - mean(x)'w. lambda == 0 is plain OLS.
inline LinearModel fit_ridge(const Matrix& x, const Vector& y, double lambda) {
  if (x.rows() != y.size()) throw Error(ErrorCode::shape, "x and y row counts differ");
  if (!(lambda >= 0.0)) throw Error(ErrorCode::invalid_argument, "ridge lambda must be >= 0");
  if (x.rows() < 2) throw Error(ErrorCode::too_few_samples, "ridge needs at least 2 rows");
  if (lambda == 0.0) return fit_ols(x, y);

  const Eigen::RowVectorXd x_mean = x.colwise().mean();
  const double y_mean = y.mean();
  const Matrix xc = x.rowwise() - x_mean;
  const Vector yc = y.array() - y_mean;
  Matrix gram = xc.transpose() * xc;
  gram.diagonal().array() += lambda;

  LinearModel m;
  m.regularization = lambda;
  m.weights = gram.ldlt().solve(xc.transpose() * yc);
  m.bias = y_mean - x_mean.dot(m.weights);
  return m;
}

}  // namespace foodprice
