#include <algorithm>
#include <cmath>
#include <limits>

#include "coper/simd/kernels.hpp"
#include "coper/tensor.hpp"

namespace coper {
namespace {

const simd::KernelTable& K() { return simd::active(); }

std::size_t normalize_axis(int axis, std::size_t rank, const Shape& shape) {
  const int r = static_cast<int>(rank);
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for " + shape_str(shape));
  }
  return static_cast<std::size_t>(a);
}

// Outer/axis/inner decomposition used by the reductions and slicing ops.
struct AxisView {
  std::size_t outer = 1;
  std::size_t extent = 1;
  std::size_t inner = 1;
};

AxisView axis_view(const Shape& shape, std::size_t axis) {
  AxisView v;
  for (std::size_t i = 0; i < axis; ++i) v.outer *= shape[i];
  v.extent = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) v.inner *= shape[i];
  return v;
}

bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  return std::equal(small.begin(), small.end(), big.end() - static_cast<long>(small.size()));
}

enum class Binary { add, sub, mul };

Tensor binary(const Tensor& a, const Tensor& b, Binary kind) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  const char* names[] = {"add", "sub", "mul"};
  const bool a_big = sa.size() >= sb.size();
  const Shape& big = a_big ? sa : sb;
  const Shape& small = a_big ? sb : sa;
  if (!is_suffix(small, big)) {
    throw ShapeError(std::string(names[static_cast<int>(kind)]) + ": shapes " + shape_str(sa) +
                     " and " + shape_str(sb) + " are not broadcast-compatible");
  }
  const std::size_t n_small = shape_numel(small);
  const std::size_t reps = shape_numel(big) / n_small;
  const bool a_bcast = sa != sb && !a_big;
  const bool b_bcast = sa != sb && a_big;
  std::vector<double> out(shape_numel(big));
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  const auto& k = K();
  for (std::size_t r = 0; r < reps; ++r) {
    const double* ra = pa + (a_bcast ? 0 : r * n_small);
    const double* rb = pb + (b_bcast ? 0 : r * n_small);
    double* ro = out.data() + r * n_small;
    switch (kind) {
      case Binary::add: k.add(ra, rb, ro, n_small); break;
      case Binary::sub: k.sub(ra, rb, ro, n_small); break;
      case Binary::mul: k.mul(ra, rb, ro, n_small); break;
    }
  }
  return make_result(big, std::move(out), {a, b},
                     [kind, reps, n_small, a_bcast, b_bcast](BackwardContext& ctx) {
    const auto g = ctx.grad_output();
    const auto& k = K();
    for (std::size_t side = 0; side < 2; ++side) {
      if (!ctx.needs_grad(side)) continue;
      auto gp = ctx.parent_grad(side);
      const bool bcast = side == 0 ? a_bcast : b_bcast;
      const auto other = ctx.parent_data(1 - side);
      const bool other_bcast = side == 0 ? b_bcast : a_bcast;
      for (std::size_t r = 0; r < reps; ++r) {
        const double* gr = g.data() + r * n_small;
        double* dst = gp.data() + (bcast ? 0 : r * n_small);
        switch (kind) {
          case Binary::add: k.axpy(1.0, gr, dst, n_small); break;
          case Binary::sub: k.axpy(side == 0 ? 1.0 : -1.0, gr, dst, n_small); break;
          case Binary::mul: {
            const double* o = other.data() + (other_bcast ? 0 : r * n_small);
            k.mul_acc(gr, o, dst, n_small);
            break;
          }
        }
      }
    }
  });
}

template <typename Forward, typename Derivative>
Tensor unary(const Tensor& x, Forward f, Derivative dfdx_from_xy) {
  const auto in = x.data();
  std::vector<double> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = f(in[i]);
  return make_result(x.shape(), std::move(out), {x}, [dfdx_from_xy](BackwardContext& ctx) {
    const auto g = ctx.grad_output();
    const auto xs = ctx.parent_data(0);
    const auto ys = ctx.output();
    auto gx = ctx.parent_grad(0);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * dfdx_from_xy(xs[i], ys[i]);
  });
}

double stable_sigmoid(double v) {
  if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

struct MatmulPlan {
  std::size_t batch = 1;
  bool a_shared = false;  // a is a plain matrix reused across b's batch
  bool b_shared = false;
  Shape out_shape;
};

Shape batch_dims(const Shape& s) { return Shape(s.begin(), s.end() - 2); }

MatmulPlan plan_matmul(const char* op, const Shape& sa, const Shape& sb, std::size_t m,
                       std::size_t p, bool inner_ok) {
  auto fail = [&] {
    throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(sa) + " and " +
                     shape_str(sb));
  };
  if (sa.size() < 2 || sb.size() < 2 || !inner_ok) fail();
  const Shape ba = batch_dims(sa);
  const Shape bb = batch_dims(sb);
  MatmulPlan plan;
  Shape lead;
  if (ba == bb) {
    lead = ba;
  } else if (ba.empty()) {
    lead = bb;
    plan.a_shared = true;
  } else if (bb.empty()) {
    lead = ba;
    plan.b_shared = true;
  } else {
    fail();
  }
  plan.batch = shape_numel(lead);
  plan.out_shape = lead;
  plan.out_shape.push_back(m);
  plan.out_shape.push_back(p);
  return plan;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  const bool ok = sa.size() >= 2 && sb.size() >= 2 && sa.back() == sb[sb.size() - 2];
  const std::size_t m = sa.size() >= 2 ? sa[sa.size() - 2] : 0;
  const std::size_t k = sa.empty() ? 0 : sa.back();
  const std::size_t p = sb.empty() ? 0 : sb.back();
  const MatmulPlan plan = plan_matmul("matmul", sa, sb, m, p, ok);
  std::vector<double> out(plan.batch * m * p);
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  if (plan.b_shared) {
    K().gemm_nn(plan.batch * m, p, k, pa, pb, out.data(), false);
  } else {
    for (std::size_t i = 0; i < plan.batch; ++i) {
      K().gemm_nn(m, p, k, pa + (plan.a_shared ? 0 : i * m * k), pb + i * k * p,
                  out.data() + i * m * p, false);
    }
  }
  return make_result(plan.out_shape, std::move(out), {a, b},
                     [plan, m, k, p](BackwardContext& ctx) {
    const double* g = ctx.grad_output().data();
    const double* pa = ctx.parent_data(0).data();
    const double* pb = ctx.parent_data(1).data();
    if (ctx.needs_grad(0)) {
      double* ga = ctx.parent_grad(0).data();
      if (plan.b_shared) {
        simd::gemm_nt(plan.batch * m, k, p, g, pb, ga, true);
      } else {
        for (std::size_t i = 0; i < plan.batch; ++i) {
          simd::gemm_nt(m, k, p, g + i * m * p, pb + i * k * p, ga + (plan.a_shared ? 0 : i * m * k),
                        true);
        }
      }
    }
    if (ctx.needs_grad(1)) {
      double* gb = ctx.parent_grad(1).data();
      if (plan.b_shared) {
        simd::gemm_tn(k, p, plan.batch * m, pa, g, gb, true);
      } else {
        for (std::size_t i = 0; i < plan.batch; ++i) {
          simd::gemm_tn(k, p, m, pa + (plan.a_shared ? 0 : i * m * k), g + i * m * p,
                        gb + i * k * p, true);
        }
      }
    }
  });
}

Tensor matmul_bt(const Tensor& a, const Tensor& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  const bool ok = sa.size() >= 2 && sb.size() >= 2 && sa.back() == sb.back();
  const std::size_t m = sa.size() >= 2 ? sa[sa.size() - 2] : 0;
  const std::size_t k = sa.empty() ? 0 : sa.back();
  const std::size_t p = sb.size() >= 2 ? sb[sb.size() - 2] : 0;
  const MatmulPlan plan = plan_matmul("matmul_bt", sa, sb, m, p, ok);
  std::vector<double> out(plan.batch * m * p);
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  if (plan.b_shared) {
    simd::gemm_nt(plan.batch * m, p, k, pa, pb, out.data(), false);
  } else {
    for (std::size_t i = 0; i < plan.batch; ++i) {
      simd::gemm_nt(m, p, k, pa + (plan.a_shared ? 0 : i * m * k), pb + i * p * k,
                    out.data() + i * m * p, false);
    }
  }
  return make_result(plan.out_shape, std::move(out), {a, b},
                     [plan, m, k, p](BackwardContext& ctx) {
    const double* g = ctx.grad_output().data();
    const double* pa = ctx.parent_data(0).data();
    const double* pb = ctx.parent_data(1).data();
    if (ctx.needs_grad(0)) {
      double* ga = ctx.parent_grad(0).data();
      if (plan.b_shared) {
        K().gemm_nn(plan.batch * m, k, p, g, pb, ga, true);
      } else {
        for (std::size_t i = 0; i < plan.batch; ++i) {
          K().gemm_nn(m, k, p, g + i * m * p, pb + i * p * k, ga + (plan.a_shared ? 0 : i * m * k),
                      true);
        }
      }
    }
    if (ctx.needs_grad(1)) {
      double* gb = ctx.parent_grad(1).data();
      if (plan.b_shared) {
        simd::gemm_tn(p, k, plan.batch * m, g, pa, gb, true);
      } else {
        for (std::size_t i = 0; i < plan.batch; ++i) {
          simd::gemm_tn(p, k, m, g + i * m * p, pa + (plan.a_shared ? 0 : i * m * k),
                        gb + i * p * k, true);
        }
      }
    }
  });
}

Tensor add(const Tensor& a, const Tensor& b) { return binary(a, b, Binary::add); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(a, b, Binary::sub); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(a, b, Binary::mul); }

Tensor scale(const Tensor& x, double factor) {
  std::vector<double> out(x.numel());
  K().scale(factor, x.data().data(), out.data(), out.size());
  return make_result(x.shape(), std::move(out), {x}, [factor](BackwardContext& ctx) {
    const auto g = ctx.grad_output();
    K().axpy(factor, g.data(), ctx.parent_grad(0).data(), g.size());
  });
}

Tensor add_scalar(const Tensor& x, double value) {
  std::vector<double> out(x.data().begin(), x.data().end());
  for (double& v : out) v += value;
  return make_result(x.shape(), std::move(out), {x}, [](BackwardContext& ctx) {
    const auto g = ctx.grad_output();
    K().axpy(1.0, g.data(), ctx.parent_grad(0).data(), g.size());
  });
}

Tensor exp(const Tensor& x) {
  return unary(
      x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor tanh(const Tensor& x) {
  return unary(
      x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(const Tensor& x) {
  return unary(x, stable_sigmoid, [](double, double y) { return y * (1.0 - y); });
}

Tensor relu(const Tensor& x) {
  return unary(
      x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor sum(const Tensor& x) {
  const double total = K().sum(x.data().data(), x.numel());
  return make_result({}, {total}, {x}, [](BackwardContext& ctx) {
    const double g = ctx.grad_output()[0];
    for (double& v : ctx.parent_grad(0)) v += g;
  });
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

Tensor sum(const Tensor& x, int axis, bool keepdim) {
  const std::size_t ax = normalize_axis(axis, x.rank(), x.shape());
  const AxisView v = axis_view(x.shape(), ax);
  std::vector<double> out(v.outer * v.inner, 0.0);
  const double* px = x.data().data();
  for (std::size_t o = 0; o < v.outer; ++o) {
    for (std::size_t j = 0; j < v.extent; ++j) {
      K().add(out.data() + o * v.inner, px + (o * v.extent + j) * v.inner, out.data() + o * v.inner,
              v.inner);
    }
  }
  Shape shape = x.shape();
  if (keepdim) {
    shape[ax] = 1;
  } else {
    shape.erase(shape.begin() + static_cast<long>(ax));
  }
  return make_result(std::move(shape), std::move(out), {x}, [v](BackwardContext& ctx) {
    const double* g = ctx.grad_output().data();
    double* gx = ctx.parent_grad(0).data();
    for (std::size_t o = 0; o < v.outer; ++o) {
      for (std::size_t j = 0; j < v.extent; ++j) {
        K().axpy(1.0, g + o * v.inner, gx + (o * v.extent + j) * v.inner, v.inner);
      }
    }
  });
}

Tensor mean(const Tensor& x, int axis, bool keepdim) {
  const double n = static_cast<double>(x.dim(axis));
  return scale(sum(x, axis, keepdim), 1.0 / n);
}

Tensor transpose(const Tensor& x) {
  if (x.rank() < 2) throw ShapeError("transpose needs rank >= 2, got " + shape_str(x.shape()));
  const std::size_t r = x.dim(-2);
  const std::size_t c = x.dim(-1);
  const std::size_t batch = x.numel() / (r * c);
  std::vector<double> out(x.numel());
  const double* px = x.data().data();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < c; ++j) out[b * r * c + j * r + i] = px[b * r * c + i * c + j];
    }
  }
  Shape shape = x.shape();
  std::swap(shape[shape.size() - 1], shape[shape.size() - 2]);
  return make_result(std::move(shape), std::move(out), {x}, [batch, r, c](BackwardContext& ctx) {
    const double* g = ctx.grad_output().data();
    double* gx = ctx.parent_grad(0).data();
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < c; ++j) gx[b * r * c + i * c + j] += g[b * r * c + j * r + i];
      }
    }
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  return make_result(std::move(shape), x.to_vector(), {x}, [](BackwardContext& ctx) {
    const auto g = ctx.grad_output();
    K().axpy(1.0, g.data(), ctx.parent_grad(0).data(), g.size());
  });
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw ShapeError("concat of zero tensors");
  const Shape& first = parts.front().shape();
  const std::size_t ax = normalize_axis(axis, first.size(), first);
  Shape out_shape = first;
  out_shape[ax] = 0;
  std::vector<std::size_t> extents;
  for (const Tensor& t : parts) {
    const Shape& s = t.shape();
    bool ok = s.size() == first.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) ok = i == ax || s[i] == first[i];
    if (!ok) {
      throw ShapeError("concat: shape " + shape_str(s) + " does not match " + shape_str(first) +
                       " off axis " + std::to_string(ax));
    }
    extents.push_back(s[ax]);
    out_shape[ax] += s[ax];
  }
  const AxisView v = axis_view(out_shape, ax);
  std::vector<double> out(shape_numel(out_shape));
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const double* src = parts[p].data().data();
    const std::size_t chunk = extents[p] * v.inner;
    for (std::size_t o = 0; o < v.outer; ++o) {
      std::copy_n(src + o * chunk, chunk, out.data() + o * v.extent * v.inner + offset);
    }
    offset += chunk;
  }
  return make_result(std::move(out_shape), std::move(out), parts,
                     [v, extents](BackwardContext& ctx) {
    const double* g = ctx.grad_output().data();
    std::size_t offset = 0;
    for (std::size_t p = 0; p < extents.size(); ++p) {
      const std::size_t chunk = extents[p] * v.inner;
      if (ctx.needs_grad(p)) {
        double* gp = ctx.parent_grad(p).data();
        for (std::size_t o = 0; o < v.outer; ++o) {
          K().axpy(1.0, g + o * v.extent * v.inner + offset, gp + o * chunk, chunk);
        }
      }
      offset += chunk;
    }
  });
}

Tensor slice(const Tensor& x, int axis, std::size_t begin, std::size_t end) {
  const std::size_t ax = normalize_axis(axis, x.rank(), x.shape());
  if (begin >= end || end > x.shape()[ax]) {
    throw ShapeError("slice [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") out of range on axis " + std::to_string(ax) + " of " +
                     shape_str(x.shape()));
  }
  const AxisView v = axis_view(x.shape(), ax);
  const std::size_t chunk = (end - begin) * v.inner;
  std::vector<double> out(v.outer * chunk);
  const double* px = x.data().data();
  for (std::size_t o = 0; o < v.outer; ++o) {
    std::copy_n(px + (o * v.extent + begin) * v.inner, chunk, out.data() + o * chunk);
  }
  Shape shape = x.shape();
  shape[ax] = end - begin;
  return make_result(std::move(shape), std::move(out), {x}, [v, begin, chunk](BackwardContext& ctx) {
    const double* g = ctx.grad_output().data();
    double* gx = ctx.parent_grad(0).data();
    for (std::size_t o = 0; o < v.outer; ++o) {
      K().axpy(1.0, g + o * chunk, gx + (o * v.extent + begin) * v.inner, chunk);
    }
  });
}

Tensor expand(const Tensor& x, const Shape& leading) {
  const std::size_t reps = shape_numel(leading);
  const std::size_t n = x.numel();
  std::vector<double> out(reps * n);
  for (std::size_t r = 0; r < reps; ++r) std::copy_n(x.data().data(), n, out.data() + r * n);
  Shape shape = leading;
  shape.insert(shape.end(), x.shape().begin(), x.shape().end());
  return make_result(std::move(shape), std::move(out), {x}, [reps, n](BackwardContext& ctx) {
    const double* g = ctx.grad_output().data();
    double* gx = ctx.parent_grad(0).data();
    for (std::size_t r = 0; r < reps; ++r) K().axpy(1.0, g + r * n, gx, n);
  });
}

Tensor masked_fill(const Tensor& x, const BoolMask& mask, double value) {
  if (!is_suffix(mask.shape, x.shape()) || mask.bits.size() != shape_numel(mask.shape)) {
    throw ShapeError("masked_fill: mask " + shape_str(mask.shape) + " does not broadcast to " +
                     shape_str(x.shape()));
  }
  const std::size_t n = mask.bits.size();
  std::vector<double> out = x.to_vector();
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (mask.bits[i % n]) out[i] = value;
  }
  return make_result(x.shape(), std::move(out), {x}, [mask](BackwardContext& ctx) {
    const auto g = ctx.grad_output();
    auto gx = ctx.parent_grad(0);
    const std::size_t n = mask.bits.size();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (!mask.bits[i % n]) gx[i] += g[i];
    }
  });
}

Tensor softmax(const Tensor& x, int axis) {
  const std::size_t ax = normalize_axis(axis, x.rank(), x.shape());
  const AxisView v = axis_view(x.shape(), ax);
  const double* px = x.data().data();
  std::vector<double> out(x.numel());
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  for (std::size_t o = 0; o < v.outer; ++o) {
    for (std::size_t in = 0; in < v.inner; ++in) {
      const std::size_t base = o * v.extent * v.inner + in;
      double top = kNegInf;
      for (std::size_t j = 0; j < v.extent; ++j) {
        const double val = px[base + j * v.inner];
        if (std::isnan(val)) throw NumericError("softmax: NaN input");
        if (val == std::numeric_limits<double>::infinity()) {
          throw NumericError("softmax: +inf input");
        }
        top = std::max(top, val);
      }
      if (top == kNegInf) throw NumericError("softmax: every entry of a slice is -inf");
      double total = 0.0;
      for (std::size_t j = 0; j < v.extent; ++j) {
        const double e = std::exp(px[base + j * v.inner] - top);
        out[base + j * v.inner] = e;
        total += e;
      }
      const double inv = 1.0 / total;
      for (std::size_t j = 0; j < v.extent; ++j) out[base + j * v.inner] *= inv;
    }
  }
  return make_result(x.shape(), std::move(out), {x}, [v](BackwardContext& ctx) {
    const double* g = ctx.grad_output().data();
    const double* y = ctx.output().data();
    double* gx = ctx.parent_grad(0).data();
    for (std::size_t o = 0; o < v.outer; ++o) {
      for (std::size_t in = 0; in < v.inner; ++in) {
        const std::size_t base = o * v.extent * v.inner + in;
        double dot = 0.0;
        for (std::size_t j = 0; j < v.extent; ++j) {
          dot += g[base + j * v.inner] * y[base + j * v.inner];
        }
        for (std::size_t j = 0; j < v.extent; ++j) {
          const std::size_t idx = base + j * v.inner;
          gx[idx] += y[idx] * (g[idx] - dot);
        }
      }
    }
  });
}

Tensor select_rows(const std::vector<std::uint8_t>& take_a, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape() || a.rank() == 0 || take_a.size() != a.shape()[0]) {
    throw ShapeError("select_rows: shapes " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()) + " with " + std::to_string(take_a.size()) +
                     " selectors");
  }
  const std::size_t rows = take_a.size();
  const std::size_t width = a.numel() / rows;
  std::vector<double> out(a.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* src = (take_a[r] ? a : b).data().data() + r * width;
    std::copy_n(src, width, out.data() + r * width);
  }
  return make_result(a.shape(), std::move(out), {a, b}, [take_a, width](BackwardContext& ctx) {
    const double* g = ctx.grad_output().data();
    for (std::size_t side = 0; side < 2; ++side) {
      if (!ctx.needs_grad(side)) continue;
      double* gp = ctx.parent_grad(side).data();
      for (std::size_t r = 0; r < take_a.size(); ++r) {
        if ((take_a[r] != 0) == (side == 0)) K().axpy(1.0, g + r * width, gp + r * width, width);
      }
    }
  });
}

Tensor take_steps(const Tensor& x, const std::vector<std::size_t>& steps) {
  if (x.rank() < 2 || steps.size() != x.shape()[0]) {
    throw ShapeError("take_steps: " + std::to_string(steps.size()) + " indices for shape " +
                     shape_str(x.shape()));
  }
  const std::size_t rows = x.shape()[0];
  const std::size_t t = x.shape()[1];
  const std::size_t width = x.numel() / (rows * t);
  std::vector<double> out(rows * width);
  for (std::size_t r = 0; r < rows; ++r) {
    if (steps[r] >= t) throw ShapeError("take_steps: step index out of range");
    std::copy_n(x.data().data() + (r * t + steps[r]) * width, width, out.data() + r * width);
  }
  Shape shape(x.shape().begin() + 2, x.shape().end());
  shape.insert(shape.begin(), rows);
  return make_result(std::move(shape), std::move(out), {x},
                     [steps, t, width](BackwardContext& ctx) {
    const double* g = ctx.grad_output().data();
    double* gx = ctx.parent_grad(0).data();
    for (std::size_t r = 0; r < steps.size(); ++r) {
      K().axpy(1.0, g + r * width, gx + (r * t + steps[r]) * width, width);
    }
  });
}

}  // namespace coper
