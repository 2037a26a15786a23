#pragma once

#include <functional>
#include <memory>
#include <string>

#include "stringgp/kernels.hpp"
#include "stringgp/linalg.hpp"

namespace stringgp {

// Unconditional mean as a (m, dm/dt) pair.
struct MeanFunction {
  std::function<double(double)> m;
  std::function<double(double)> dm;
  std::string description = "zero";

  static MeanFunction zero() {
    return {[](double) { return 0.0; }, [](double) { return 0.0; }, "zero"};
  }
  static MeanFunction constant(double c) {
    return {[c](double) { return c; }, [](double) { return 0.0; }, "constant:" + std::to_string(c)};
  }

  Vec2 operator()(double t) const { return {m ? m(t) : 0.0, dm ? dm(t) : 0.0}; }
  bool is_zero() const { return description == "zero"; }
};

struct BoundaryCondition {
  double time = 0.0;
  double value = 0.0;
  double derivative = 0.0;

  Vec2 state() const { return {value, derivative}; }
};

// Derivative GP conditioned on its state at a single time a.
class LeftConditioner {
 public:
  LeftConditioner(KernelSpec kernel, double a)
      : kernel_(std::move(kernel)), a_(a),
        Kaa_inv_(linalg::spd_inverse<2>(eval_block(kernel_, a, a), a, "conditioning at boundary")) {}

  double a() const { return a_; }
  const KernelSpec& kernel() const { return kernel_; }

  // K_{t;a} K_{a;a}^{-1}
  Mat2 gain(double t) const { return eval_block(kernel_, t, a_) * Kaa_inv_; }

  Vec2 mean(const MeanFunction& mf, const BoundaryCondition& bc, double t) const {
    return mf(t) + gain(t) * (bc.state() - mf(a_));
  }

  Mat2 cov(double t, double s) const {
    return eval_block(kernel_, t, s) - gain(t) * eval_block(kernel_, a_, s);
  }

 private:
  KernelSpec kernel_;
  double a_;
  Mat2 Kaa_inv_;
};

// Derivative GP conditioned on its states at a < b.
class BridgeConditioner {
 public:
  BridgeConditioner(KernelSpec kernel, double a, double b) : kernel_(std::move(kernel)), a_(a), b_(b) {
    if (!(a < b)) throw InputError("bridge conditioning requires a < b");
    const auto flags = degeneracy_check(kernel_, a, b);
    if (flags.degenerate_at_a) throw DegeneracyError("kernel degenerate at boundary", a);
    if (flags.degenerate_at_b_given_a) throw DegeneracyError("kernel degenerate at boundary given previous", b);
    Mat4 K;
    K.block<2, 2>(0, 0) = eval_block(kernel_, a, a);
    K.block<2, 2>(0, 2) = eval_block(kernel_, a, b);
    K.block<2, 2>(2, 0) = eval_block(kernel_, b, a);
    K.block<2, 2>(2, 2) = eval_block(kernel_, b, b);
    Kinv_ = linalg::spd_inverse<4>(K, b, "two-sided conditioning");
  }

  double a() const { return a_; }
  double b() const { return b_; }

  // K_{t;(a,b)} K_{(a,b);(a,b)}^{-1}, a 2x4 map.
  Eigen::Matrix<double, 2, 4> gain(double t) const {
    Eigen::Matrix<double, 2, 4> Kt;
    Kt.block<2, 2>(0, 0) = eval_block(kernel_, t, a_);
    Kt.block<2, 2>(0, 2) = eval_block(kernel_, t, b_);
    return Kt * Kinv_;
  }

  Vec2 mean(const MeanFunction& mf, const BoundaryCondition& bc_a, const BoundaryCondition& bc_b,
            double t) const {
    Vec4 r;
    r.head<2>() = bc_a.state() - mf(a_);
    r.tail<2>() = bc_b.state() - mf(b_);
    return mf(t) + gain(t) * r;
  }

  Mat2 cov(double t, double s) const {
    Eigen::Matrix<double, 4, 2> Ks;
    Ks.block<2, 2>(0, 0) = eval_block(kernel_, a_, s);
    Ks.block<2, 2>(2, 0) = eval_block(kernel_, b_, s);
    return eval_block(kernel_, t, s) - gain(t) * Ks;
  }

 private:
  KernelSpec kernel_;
  double a_, b_;
  Mat4 Kinv_;
};

struct ConditionalMoments {
  Vec2 mean;
  Mat2 cov;  // auto-covariance block at t
};

inline ConditionalMoments condition_left(const MeanFunction& mf, const KernelSpec& k,
                                         const BoundaryCondition& bc, double t) {
  LeftConditioner c(k, bc.time);
  return {c.mean(mf, bc, t), c.cov(t, t)};
}

inline ConditionalMoments condition_both(const MeanFunction& mf, const KernelSpec& k,
                                         const BoundaryCondition& bc_a, const BoundaryCondition& bc_b,
                                         double t) {
  if (t < bc_a.time || t > bc_b.time) throw InputError("query time outside conditioning interval");
  BridgeConditioner c(k, bc_a.time, bc_b.time);
  return {c.mean(mf, bc_a, bc_b, t), c.cov(t, t)};
}

}  // namespace stringgp
