#include "gemm.hpp"

#include <Eigen/Core>
#include <vector>

namespace vmsgan::nn::detail {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

void gemm_double(Op op_a, Op op_b, int m, int n, int k, const double* a, const double* b, double* c,
                 bool accumulate) {
  MutMap out(c, m, n);
  auto run = [&](const auto& lhs, const auto& rhs) {
    if (accumulate) {
      out.noalias() += lhs * rhs;
    } else {
      out.noalias() = lhs * rhs;
    }
  };
  if (op_a == Op::kNone) {
    ConstMap lhs(a, m, k);
    if (op_b == Op::kNone) {
      run(lhs, ConstMap(b, k, n));
    } else {
      run(lhs, ConstMap(b, n, k).transpose());
    }
  } else {
    ConstMap lhs(a, k, m);
    if (op_b == Op::kNone) {
      run(lhs.transpose(), ConstMap(b, k, n));
    } else {
      run(lhs.transpose(), ConstMap(b, n, k).transpose());
    }
  }
}

struct Planes {
  std::vector<double> value;
  std::vector<double> tangent;
};

Planes split(const Dual* x, std::size_t count) {
  Planes p{std::vector<double>(count), std::vector<double>(count)};
  for (std::size_t i = 0; i < count; ++i) {
    p.value[i] = x[i].v;
    p.tangent[i] = x[i].d;
  }
  return p;
}

}  // namespace

template <>
void gemm<double, double, double>(Op op_a, Op op_b, int m, int n, int k, const double* a,
                                  const double* b, double* c, bool accumulate) {
  gemm_double(op_a, op_b, m, n, k, a, b, c, accumulate);
}

template <>
void gemm<double, Dual, Dual>(Op op_a, Op op_b, int m, int n, int k, const double* a, const Dual* b,
                              Dual* c, bool accumulate) {
  const std::size_t mn = static_cast<std::size_t>(m) * n;
  const Planes pb = split(b, static_cast<std::size_t>(k) * n);
  Planes pc = accumulate ? split(c, mn) : Planes{std::vector<double>(mn), std::vector<double>(mn)};
  gemm_double(op_a, op_b, m, n, k, a, pb.value.data(), pc.value.data(), accumulate);
  gemm_double(op_a, op_b, m, n, k, a, pb.tangent.data(), pc.tangent.data(), accumulate);
  for (std::size_t i = 0; i < mn; ++i) c[i] = Dual(pc.value[i], pc.tangent[i]);
}

template <>
void gemm<Dual, double, Dual>(Op op_a, Op op_b, int m, int n, int k, const Dual* a, const double* b,
                              Dual* c, bool accumulate) {
  const std::size_t mn = static_cast<std::size_t>(m) * n;
  const Planes pa = split(a, static_cast<std::size_t>(m) * k);
  Planes pc = accumulate ? split(c, mn) : Planes{std::vector<double>(mn), std::vector<double>(mn)};
  gemm_double(op_a, op_b, m, n, k, pa.value.data(), b, pc.value.data(), accumulate);
  gemm_double(op_a, op_b, m, n, k, pa.tangent.data(), b, pc.tangent.data(), accumulate);
  for (std::size_t i = 0; i < mn; ++i) c[i] = Dual(pc.value[i], pc.tangent[i]);
}

template <>
void gemm<Dual, Dual, Dual>(Op op_a, Op op_b, int m, int n, int k, const Dual* a, const Dual* b,
                            Dual* c, bool accumulate) {
  const std::size_t mn = static_cast<std::size_t>(m) * n;
  const Planes pa = split(a, static_cast<std::size_t>(m) * k);
  const Planes pb = split(b, static_cast<std::size_t>(k) * n);
  Planes pc = accumulate ? split(c, mn) : Planes{std::vector<double>(mn), std::vector<double>(mn)};
  gemm_double(op_a, op_b, m, n, k, pa.value.data(), pb.value.data(), pc.value.data(), accumulate);
  gemm_double(op_a, op_b, m, n, k, pa.tangent.data(), pb.value.data(), pc.tangent.data(), accumulate);
  gemm_double(op_a, op_b, m, n, k, pa.value.data(), pb.tangent.data(), pc.tangent.data(), true);
  for (std::size_t i = 0; i < mn; ++i) c[i] = Dual(pc.value[i], pc.tangent[i]);
}

}  // namespace vmsgan::nn::detail
