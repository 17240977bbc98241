#pragma once

#include <cstddef>
#include <span>

// Raw row-major kernels shared by the tape and the inference-only decoder.
namespace jobgen::tensor::kernels {

// out[M,N] += a[M,K] * b[K,N]
void matmul_acc(std::span<const double> a, std::span<const double> b, std::span<double> out, std::size_t m,
                std::size_t k, std::size_t n);
// out[M,N] += a[M,K] * b[N,K]^T
void matmul_nt_acc(std::span<const double> a, std::span<const double> b, std::span<double> out, std::size_t m,
                   std::size_t k, std::size_t n);
// out[K,N] += a[M,K]^T * b[M,N]
void matmul_tn_acc(std::span<const double> a, std::span<const double> b, std::span<double> out, std::size_t m,
                   std::size_t k, std::size_t n);

// In-place numerically stable softmax of one row.
void softmax_row(std::span<double> row);
// log(sum(exp(row))) with max subtraction.
double log_sum_exp(std::span<const double> row);

double gelu(double x);
double gelu_grad(double x);
double sigmoid(double x);
double log_sigmoid(double x);

// Normalizes one row in place and returns 1/sqrt(var + eps).
double layer_norm_row(std::span<double> row, double eps);

}  // namespace jobgen::tensor::kernels
