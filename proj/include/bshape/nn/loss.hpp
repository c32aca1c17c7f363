#pragma once

// Paired Siamese regression loss for P pairs (rows) of d-dimensional outputs:
//
//   L = 1/2 [MSE(pred_a, y_a) + MSE(pred_b, y_b)] + lambda * MSE(pred_a - pred_b, y_a - y_b)
//
// every MSE averaged over both rows and output dimensions.

#include "bshape/error.hpp"
#include "bshape/nn/network.hpp"

namespace bshape::nn {

template <typename T>
struct PairedLoss {
  T value = 0;
  Mat<T> grad_a;  // dL/d pred_a
  Mat<T> grad_b;  // dL/d pred_b
};

template <typename T>
PairedLoss<T> paired_loss(const Mat<T>& pred_a, const Mat<T>& pred_b, const Mat<T>& y_a, const Mat<T>& y_b,
                          T lambda) {
  if (pred_a.rows() != pred_b.rows() || pred_a.cols() != pred_b.cols() || y_a.rows() != pred_a.rows() ||
      y_a.cols() != pred_a.cols() || y_b.rows() != pred_b.rows() || y_b.cols() != pred_b.cols())
    fail(ErrorCode::ShapeMismatch, "paired loss operands differ in shape");
  if (pred_a.size() == 0) fail(ErrorCode::ShapeMismatch, "paired loss needs at least one pair");

  const T count = static_cast<T>(pred_a.size());
  const Mat<T> err_a = pred_a - y_a;
  const Mat<T> err_b = pred_b - y_b;
  const Mat<T> err_pair = err_a - err_b;  // (pred_a - pred_b) - (y_a - y_b)

  PairedLoss<T> out;
  out.value = T(0.5) * (err_a.squaredNorm() + err_b.squaredNorm()) / count + lambda * err_pair.squaredNorm() / count;
  out.grad_a = (err_a + T(2) * lambda * err_pair) / count;
  out.grad_b = (err_b - T(2) * lambda * err_pair) / count;
  return out;
}

}  // namespace bshape::nn
