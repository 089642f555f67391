#pragma once

#include "cetp/tensor.hpp"

namespace cetp::kernels {

// Matrix products. The OpenMP variants parallelize over output rows while
// keeping the per-element accumulation order identical to the serial
// reference, so results are bit-identical for any thread count.

// c = a * b
void mm_nn_serial(const Tensor& a, const Tensor& b, Tensor& c);
void mm_nn(const Tensor& a, const Tensor& b, Tensor& c);

// c = a * b^T
void mm_nt_serial(const Tensor& a, const Tensor& b, Tensor& c);
void mm_nt(const Tensor& a, const Tensor& b, Tensor& c);

// c = a^T * b
void mm_tn_serial(const Tensor& a, const Tensor& b, Tensor& c);
void mm_tn(const Tensor& a, const Tensor& b, Tensor& c);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor matmul_nt(const Tensor& a, const Tensor& b);
Tensor matmul_tn(const Tensor& a, const Tensor& b);

// Work threshold below which the parallel variants stay on one thread.
inline constexpr long kParallelMinWork = 16 * 1024;

}  // namespace cetp::kernels
