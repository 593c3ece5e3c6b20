#pragma once

#include "vmsgan/dual.hpp"

namespace vmsgan::nn::detail {

enum class Op { kNone, kTranspose };

/// C[m x n] (+)= op(A)[m x k] * op(B)[k x n], all row-major and densely packed.
/// Dual operands are split into value/tangent planes and multiplied with the
/// double kernel.
template <class TA, class TB, class TC>
void gemm(Op op_a, Op op_b, int m, int n, int k, const TA* a, const TB* b, TC* c, bool accumulate);

}  // namespace vmsgan::nn::detail
