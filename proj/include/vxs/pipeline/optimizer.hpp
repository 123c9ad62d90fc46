#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "vxs/core/error.hpp"
#include "vxs/core/tensor.hpp"
#include "vxs/field/grid.hpp"

namespace vxs {

/// Adam moments for one parameter array, stored float32 so checkpoints are
/// exact snapshots of the in-memory state.
struct AdamState {
  std::vector<float> m, v;
  int64_t step = 0;

  void init(size_t n) {
    m.assign(n, 0.0f);
    v.assign(n, 0.0f);
    step = 0;
  }
};

struct AdamParams {
  double lr = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One Adam step. Math runs in double; parameters and moments round back to
/// float32, which keeps checkpoint round trips and replays bit-exact.
inline void adam_step(std::vector<float>& param, const Tensor& grad, AdamState& st,
                      const AdamParams& hp) {
  VXS_CHECK(param.size() == static_cast<size_t>(grad.numel()), InvalidInput,
            "adam_step: gradient size mismatch");
  if (st.m.size() != param.size()) st.init(param.size());
  ++st.step;
  const double b1 = hp.beta1, b2 = hp.beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(st.step));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(st.step));
  for (size_t i = 0; i < param.size(); ++i) {
    double g = grad[static_cast<int64_t>(i)];
    double m = b1 * double(st.m[i]) + (1.0 - b1) * g;
    double v = b2 * double(st.v[i]) + (1.0 - b2) * g * g;
    st.m[i] = static_cast<float>(m);
    st.v[i] = static_cast<float>(v);
    double update = hp.lr * (m / bc1) / (std::sqrt(v / bc2) + hp.eps);
    param[i] = static_cast<float>(double(param[i]) - update);
  }
}

/// Adam over all parameter arrays of one grid.
struct GridOptimizer {
  std::vector<AdamState> states;
  AdamParams hp;

  void init_for(const VoxelGrid& g) {
    auto arrays = g.param_arrays();
    states.resize(arrays.size());
    for (size_t i = 0; i < arrays.size(); ++i) states[i].init(arrays[i]->size());
  }

  void step(VoxelGrid& g, const GridVars& gv) {
    auto arrays = g.param_arrays();
    VXS_CHECK(arrays.size() == gv.params.size(), InvalidInput, "optimizer/grid mismatch");
    if (states.size() != arrays.size()) init_for(g);
    for (size_t i = 0; i < arrays.size(); ++i)
      adam_step(*arrays[i], gv.params[i].grad(), states[i], hp);
  }
};

}  // namespace vxs
