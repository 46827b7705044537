#include "focusflow/ops.hpp"

#include <Eigen/Core>
#include <cmath>
#include <initializer_list>
#include <numeric>

#include "focusflow/error.hpp"

namespace focusflow {

namespace {

using detail::Node;
using NodePtr = std::shared_ptr<Node>;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstMatMap = Eigen::Map<const RowMatrix>;

NodePtr make_node(Shape shape, std::vector<double> value, std::initializer_list<const Tensor*> inputs) {
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->value = std::move(value);
    node->leaf = false;
    for (const Tensor* t : inputs) {
        if (t && t->requires_grad()) node->requires_grad = true;
    }
    if (node->requires_grad) {
        for (const Tensor* t : inputs) node->parents.push_back(t ? t->node() : nullptr);
    }
    return node;
}

struct KinkLog {
    bool on = false;
    std::uint64_t hash = 0;
};
thread_local KinkLog kink_log;

inline void record_kink(int side) {
    if (!kink_log.on) return;
    kink_log.hash = (kink_log.hash ^ static_cast<std::uint64_t>(side + 2)) * 0x100000001b3ULL;
}

inline int side_of(double x) { return (x > 0.0) - (x < 0.0); }

bool wants_grad(const Node& self, std::size_t i) {
    return i < self.parents.size() && self.parents[i] && self.parents[i]->requires_grad;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) + " vs " +
                         shape_to_string(b.shape()));
    }
}

void require_rank3(const Tensor& t, const char* op) {
    if (t.rank() != 3) throw ShapeError(std::string(op) + ": expected [C,H,W], got " + shape_to_string(t.shape()));
}

// Fills col [(cin*kh*kw) x (oh*ow)] from input.
void im2col(const double* in, int cin, int h, int w, int kh, int kw, int stride, int pad, int oh, int ow,
            double* col) {
    const std::size_t plane = static_cast<std::size_t>(oh) * ow;
    for (int c = 0; c < cin; ++c) {
        const double* src = in + static_cast<std::size_t>(c) * h * w;
        for (int ky = 0; ky < kh; ++ky) {
            for (int kx = 0; kx < kw; ++kx) {
                double* dst = col + (static_cast<std::size_t>(c) * kh * kw + ky * kw + kx) * plane;
                for (int oy = 0; oy < oh; ++oy) {
                    const int iy = oy * stride - pad + ky;
                    double* row = dst + static_cast<std::size_t>(oy) * ow;
                    if (iy < 0 || iy >= h) {
                        std::fill(row, row + ow, 0.0);
                        continue;
                    }
                    const double* srow = src + static_cast<std::size_t>(iy) * w;
                    for (int ox = 0; ox < ow; ++ox) {
                        const int ix = ox * stride - pad + kx;
                        row[ox] = (ix >= 0 && ix < w) ? srow[ix] : 0.0;
                    }
                }
            }
        }
    }
}

void col2im_add(const double* col, int cin, int h, int w, int kh, int kw, int stride, int pad, int oh, int ow,
                double* in) {
    const std::size_t plane = static_cast<std::size_t>(oh) * ow;
    for (int c = 0; c < cin; ++c) {
        double* dst = in + static_cast<std::size_t>(c) * h * w;
        for (int ky = 0; ky < kh; ++ky) {
            for (int kx = 0; kx < kw; ++kx) {
                const double* src = col + (static_cast<std::size_t>(c) * kh * kw + ky * kw + kx) * plane;
                for (int oy = 0; oy < oh; ++oy) {
                    const int iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= h) continue;
                    const double* row = src + static_cast<std::size_t>(oy) * ow;
                    double* drow = dst + static_cast<std::size_t>(iy) * w;
                    for (int ox = 0; ox < ow; ++ox) {
                        const int ix = ox * stride - pad + kx;
                        if (ix >= 0 && ix < w) drow[ix] += row[ox];
                    }
                }
            }
        }
    }
}

struct ResizeTable {
    std::vector<int> lo, hi;
    std::vector<double> frac;
};

ResizeTable resize_table(int in, int out) {
    ResizeTable t;
    t.lo.resize(static_cast<std::size_t>(out));
    t.hi.resize(static_cast<std::size_t>(out));
    t.frac.resize(static_cast<std::size_t>(out));
    const double ratio = static_cast<double>(in) / out;
    for (int i = 0; i < out; ++i) {
        double src = (i + 0.5) * ratio - 0.5;
        if (src < 0.0) src = 0.0;
        int lo = static_cast<int>(std::floor(src));
        if (lo > in - 1) lo = in - 1;
        const int hi = std::min(lo + 1, in - 1);
        t.lo[static_cast<std::size_t>(i)] = lo;
        t.hi[static_cast<std::size_t>(i)] = hi;
        t.frac[static_cast<std::size_t>(i)] = src - lo;
    }
    return t;
}

}  // namespace

Tensor elementwise(ElementwiseOp op, const Tensor& a, const Tensor* b, double slope) {
    switch (op) {
        case ElementwiseOp::add:
        case ElementwiseOp::sub:
        case ElementwiseOp::mul:
            if (!b) throw Error("binary elementwise op needs a second operand");
            if (op == ElementwiseOp::add) return add(a, *b);
            if (op == ElementwiseOp::sub) return sub(a, *b);
            return mul(a, *b);
        case ElementwiseOp::relu:
            return relu(a);
        case ElementwiseOp::leaky_relu:
            return leaky_relu(a, slope);
    }
    throw Error("unknown elementwise op");
}

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    std::vector<double> out(a.values().begin(), a.values().end());
    auto bv = b.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
    auto node = make_node(a.shape(), std::move(out), {&a, &b});
    if (node->requires_grad) {
        node->backward = [](Node& self) {
            for (std::size_t k = 0; k < 2; ++k) {
                if (!wants_grad(self, k)) continue;
                auto& g = self.parents[k]->grad;
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
            }
        };
    }
    return Tensor::from_node(std::move(node));
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    std::vector<double> out(a.values().begin(), a.values().end());
    auto bv = b.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
    auto node = make_node(a.shape(), std::move(out), {&a, &b});
    if (node->requires_grad) {
        node->backward = [](Node& self) {
            if (wants_grad(self, 0)) {
                auto& g = self.parents[0]->grad;
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
            }
            if (wants_grad(self, 1)) {
                auto& g = self.parents[1]->grad;
                for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
            }
        };
    }
    return Tensor::from_node(std::move(node));
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    std::vector<double> out(a.values().begin(), a.values().end());
    auto bv = b.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
    auto node = make_node(a.shape(), std::move(out), {&a, &b});
    if (node->requires_grad) {
        node->backward = [](Node& self) {
            const auto& av = self.parents[0]->value;
            const auto& bv = self.parents[1]->value;
            if (wants_grad(self, 0)) {
                auto& g = self.parents[0]->grad;
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * bv[i];
            }
            if (wants_grad(self, 1)) {
                auto& g = self.parents[1]->grad;
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * av[i];
            }
        };
    }
    return Tensor::from_node(std::move(node));
}

Tensor relu(const Tensor& a) { return leaky_relu(a, 0.0); }

Tensor leaky_relu(const Tensor& a, double slope) {
    std::vector<double> out(a.values().begin(), a.values().end());
    for (auto& v : out) {
        record_kink(side_of(v));
        if (v < 0.0) v *= slope;
    }
    auto node = make_node(a.shape(), std::move(out), {&a});
    if (node->requires_grad) {
        node->backward = [slope](Node& self) {
            const auto& x = self.parents[0]->value;
            auto& g = self.parents[0]->grad;
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += x[i] > 0.0 ? self.grad[i] : slope * self.grad[i];
        };
    }
    return Tensor::from_node(std::move(node));
}

Tensor scale(const Tensor& a, double factor) {
    std::vector<double> out(a.values().begin(), a.values().end());
    for (auto& v : out) v *= factor;
    auto node = make_node(a.shape(), std::move(out), {&a});
    if (node->requires_grad) {
        node->backward = [factor](Node& self) {
            auto& g = self.parents[0]->grad;
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += factor * self.grad[i];
        };
    }
    return Tensor::from_node(std::move(node));
}

Tensor scale_channels(const Tensor& a, std::span<const double> factors) {
    require_rank3(a, "scale_channels");
    if (factors.size() != static_cast<std::size_t>(a.dim(0))) {
        throw ShapeError("scale_channels: need one factor per channel");
    }
    const std::size_t plane = static_cast<std::size_t>(a.dim(1)) * a.dim(2);
    std::vector<double> f(factors.begin(), factors.end());
    std::vector<double> out(a.values().begin(), a.values().end());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= f[i / plane];
    auto node = make_node(a.shape(), std::move(out), {&a});
    if (node->requires_grad) {
        node->backward = [f = std::move(f), plane](Node& self) {
            auto& g = self.parents[0]->grad;
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += f[i / plane] * self.grad[i];
        };
    }
    return Tensor::from_node(std::move(node));
}

Tensor square(const Tensor& a) { return mul(a, a); }

Tensor sum(const Tensor& a) {
    auto v = a.values();
    const double s = std::accumulate(v.begin(), v.end(), 0.0);
    auto node = make_node({1}, {s}, {&a});
    if (node->requires_grad) {
        node->backward = [](Node& self) {
            auto& g = self.parents[0]->grad;
            for (auto& x : g) x += self.grad[0];
        };
    }
    return Tensor::from_node(std::move(node));
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.numel())); }

Tensor weighted_sum(const Tensor& a, std::span<const double> weights) {
    if (weights.size() != a.numel()) throw ShapeError("weighted_sum: weight count does not match tensor size");
    auto v = a.values();
    double s = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) s += v[i] * weights[i];
    std::vector<double> w(weights.begin(), weights.end());
    auto node = make_node({1}, {s}, {&a});
    if (node->requires_grad) {
        node->backward = [w = std::move(w)](Node& self) {
            auto& g = self.parents[0]->grad;
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += w[i] * self.grad[0];
        };
    }
    return Tensor::from_node(std::move(node));
}

Tensor conv2d(const Tensor& input, const Tensor& kernel, int stride, int padding) {
    return conv2d(input, kernel, Tensor(), stride, padding);
}

Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias, int stride, int padding) {
    require_rank3(input, "conv2d");
    if (kernel.rank() != 4) throw ShapeError("conv2d: kernel must be [Cout,Cin,kh,kw]");
    if (stride < 1) throw ShapeError("conv2d: stride must be positive");
    if (padding < 0) throw ShapeError("conv2d: padding must be nonnegative");
    const int cin = input.dim(0), h = input.dim(1), w = input.dim(2);
    const int cout = kernel.dim(0), kh = kernel.dim(2), kw = kernel.dim(3);
    if (kernel.dim(1) != cin) {
        throw ShapeError("conv2d: channel mismatch, input has " + std::to_string(cin) + " channels, kernel expects " +
                         std::to_string(kernel.dim(1)));
    }
    if (kh > h + 2 * padding || kw > w + 2 * padding) throw ShapeError("conv2d: kernel larger than padded input");
    if (bias.defined() && bias.shape() != Shape{cout}) throw ShapeError("conv2d: bias must be [Cout]");
    const int oh = (h + 2 * padding - kh) / stride + 1;
    const int ow = (w + 2 * padding - kw) / stride + 1;
    const int rows = cin * kh * kw;
    const int cols = oh * ow;

    // A 1x1/stride-1/no-pad kernel reads the input directly as its column matrix.
    const bool direct = kh == 1 && kw == 1 && stride == 1 && padding == 0;
    auto col = std::make_shared<std::vector<double>>();
    const double* col_ptr = input.values().data();
    if (!direct) {
        col->resize(static_cast<std::size_t>(rows) * cols);
        im2col(input.values().data(), cin, h, w, kh, kw, stride, padding, oh, ow, col->data());
        col_ptr = col->data();
    }

    std::vector<double> out(static_cast<std::size_t>(cout) * cols);
    MatMap out_m(out.data(), cout, cols);
    out_m.noalias() = ConstMatMap(kernel.values().data(), cout, rows) * ConstMatMap(col_ptr, rows, cols);
    if (bias.defined()) {
        auto bv = bias.values();
        for (int o = 0; o < cout; ++o) out_m.row(o).array() += bv[static_cast<std::size_t>(o)];
    }

    auto node = make_node({cout, oh, ow}, std::move(out), {&input, &kernel, bias.defined() ? &bias : nullptr});
    if (node->requires_grad) {
        node->backward = [=](Node& self) {
            ConstMatMap gout(self.grad.data(), cout, cols);
            const double* cp = direct ? self.parents[0]->value.data() : col->data();
            if (wants_grad(self, 1)) {
                MatMap gk(self.parents[1]->grad.data(), cout, rows);
                gk.noalias() += gout * ConstMatMap(cp, rows, cols).transpose();
            }
            if (wants_grad(self, 2)) {
                auto& gb = self.parents[2]->grad;
                for (int o = 0; o < cout; ++o) gb[static_cast<std::size_t>(o)] += gout.row(o).sum();
            }
            if (wants_grad(self, 0)) {
                ConstMatMap km(self.parents[1]->value.data(), cout, rows);
                if (direct) {
                    MatMap gin(self.parents[0]->grad.data(), rows, cols);
                    gin.noalias() += km.transpose() * gout;
                } else {
                    std::vector<double> gcol(static_cast<std::size_t>(rows) * cols);
                    MatMap(gcol.data(), rows, cols).noalias() = km.transpose() * gout;
                    col2im_add(gcol.data(), cin, h, w, kh, kw, stride, padding, oh, ow,
                               self.parents[0]->grad.data());
                }
            }
        };
    }
    return Tensor::from_node(std::move(node));
}

Tensor bilinear_resize(const Tensor& input, int out_h, int out_w) {
    require_rank3(input, "bilinear_resize");
    if (out_h < 1 || out_w < 1) throw ShapeError("bilinear_resize: output size must be positive");
    const int c = input.dim(0), h = input.dim(1), w = input.dim(2);
    auto ty = std::make_shared<ResizeTable>(resize_table(h, out_h));
    auto tx = std::make_shared<ResizeTable>(resize_table(w, out_w));
    auto in = input.values();
    std::vector<double> out(static_cast<std::size_t>(c) * out_h * out_w);
    for (int ch = 0; ch < c; ++ch) {
        const double* src = in.data() + static_cast<std::size_t>(ch) * h * w;
        double* dst = out.data() + static_cast<std::size_t>(ch) * out_h * out_w;
        for (int y = 0; y < out_h; ++y) {
            const auto yi = static_cast<std::size_t>(y);
            const double fy = ty->frac[yi];
            const double* r0 = src + static_cast<std::size_t>(ty->lo[yi]) * w;
            const double* r1 = src + static_cast<std::size_t>(ty->hi[yi]) * w;
            for (int x = 0; x < out_w; ++x) {
                const auto xi = static_cast<std::size_t>(x);
                const double fx = tx->frac[xi];
                const int x0 = tx->lo[xi], x1 = tx->hi[xi];
                const double top = r0[x0] + fx * (r0[x1] - r0[x0]);
                const double bot = r1[x0] + fx * (r1[x1] - r1[x0]);
                dst[static_cast<std::size_t>(y) * out_w + x] = top + fy * (bot - top);
            }
        }
    }
    auto node = make_node({c, out_h, out_w}, std::move(out), {&input});
    if (node->requires_grad) {
        node->backward = [=](Node& self) {
            auto& g = self.parents[0]->grad;
            for (int ch = 0; ch < c; ++ch) {
                double* dst = g.data() + static_cast<std::size_t>(ch) * h * w;
                const double* go = self.grad.data() + static_cast<std::size_t>(ch) * out_h * out_w;
                for (int y = 0; y < out_h; ++y) {
                    const auto yi = static_cast<std::size_t>(y);
                    const double fy = ty->frac[yi];
                    double* r0 = dst + static_cast<std::size_t>(ty->lo[yi]) * w;
                    double* r1 = dst + static_cast<std::size_t>(ty->hi[yi]) * w;
                    for (int x = 0; x < out_w; ++x) {
                        const auto xi = static_cast<std::size_t>(x);
                        const double fx = tx->frac[xi];
                        const double gv = go[static_cast<std::size_t>(y) * out_w + x];
                        const int x0 = tx->lo[xi], x1 = tx->hi[xi];
                        r0[x0] += gv * (1 - fy) * (1 - fx);
                        r0[x1] += gv * (1 - fy) * fx;
                        r1[x0] += gv * fy * (1 - fx);
                        r1[x1] += gv * fy * fx;
                    }
                }
            }
        };
    }
    return Tensor::from_node(std::move(node));
}

Tensor concat_channels(std::span<const Tensor> parts) {
    if (parts.empty()) throw ShapeError("concat_channels: nothing to concatenate");
    require_rank3(parts[0], "concat_channels");
    const int h = parts[0].dim(1), w = parts[0].dim(2);
    int c = 0;
    for (const auto& p : parts) {
        require_rank3(p, "concat_channels");
        if (p.dim(1) != h || p.dim(2) != w) throw ShapeError("concat_channels: spatial size mismatch");
        c += p.dim(0);
    }
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(c) * h * w);
    bool any_grad = false;
    for (const auto& p : parts) {
        out.insert(out.end(), p.values().begin(), p.values().end());
        any_grad = any_grad || p.requires_grad();
    }
    auto node = std::make_shared<Node>();
    node->shape = {c, h, w};
    node->value = std::move(out);
    node->leaf = false;
    node->requires_grad = any_grad;
    if (any_grad) {
        for (const auto& p : parts) node->parents.push_back(p.node());
        node->backward = [](Node& self) {
            std::size_t offset = 0;
            for (auto& p : self.parents) {
                const std::size_t n = p->value.size();
                if (p->requires_grad) {
                    for (std::size_t i = 0; i < n; ++i) p->grad[i] += self.grad[offset + i];
                }
                offset += n;
            }
        };
    }
    return Tensor::from_node(std::move(node));
}

Tensor correlation_volume(const Tensor& feat1, const Tensor& feat2, int radius) {
    require_rank3(feat1, "correlation_volume");
    require_same_shape(feat1, feat2, "correlation_volume");
    if (radius < 1) throw ShapeError("correlation_volume: radius must be at least 1");
    const int c = feat1.dim(0), h = feat1.dim(1), w = feat1.dim(2);
    const int side = 2 * radius + 1;
    const double norm = 1.0 / std::sqrt(static_cast<double>(c));
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    auto f1 = feat1.values();
    auto f2 = feat2.values();
    std::vector<double> out(static_cast<std::size_t>(side) * side * plane, 0.0);
    for (int dy = -radius; dy <= radius; ++dy) {
        for (int dx = -radius; dx <= radius; ++dx) {
            double* dst = out.data() + static_cast<std::size_t>((dy + radius) * side + dx + radius) * plane;
            for (int ch = 0; ch < c; ++ch) {
                const double* a = f1.data() + static_cast<std::size_t>(ch) * plane;
                const double* b = f2.data() + static_cast<std::size_t>(ch) * plane;
                for (int y = std::max(0, -dy); y < std::min(h, h - dy); ++y) {
                    for (int x = std::max(0, -dx); x < std::min(w, w - dx); ++x) {
                        dst[static_cast<std::size_t>(y) * w + x] +=
                            a[static_cast<std::size_t>(y) * w + x] * b[static_cast<std::size_t>(y + dy) * w + x + dx];
                    }
                }
            }
        }
    }
    for (auto& v : out) v *= norm;
    auto node = make_node({side * side, h, w}, std::move(out), {&feat1, &feat2});
    if (node->requires_grad) {
        node->backward = [=](Node& self) {
            const auto& a = self.parents[0]->value;
            const auto& b = self.parents[1]->value;
            const bool ga = wants_grad(self, 0), gb = wants_grad(self, 1);
            for (int dy = -radius; dy <= radius; ++dy) {
                for (int dx = -radius; dx <= radius; ++dx) {
                    const double* go =
                        self.grad.data() + static_cast<std::size_t>((dy + radius) * side + dx + radius) * plane;
                    for (int ch = 0; ch < c; ++ch) {
                        const std::size_t base = static_cast<std::size_t>(ch) * plane;
                        for (int y = std::max(0, -dy); y < std::min(h, h - dy); ++y) {
                            for (int x = std::max(0, -dx); x < std::min(w, w - dx); ++x) {
                                const std::size_t i1 = base + static_cast<std::size_t>(y) * w + x;
                                const std::size_t i2 = base + static_cast<std::size_t>(y + dy) * w + x + dx;
                                const double g = go[static_cast<std::size_t>(y) * w + x] * norm;
                                if (ga) self.parents[0]->grad[i1] += g * b[i2];
                                if (gb) self.parents[1]->grad[i2] += g * a[i1];
                            }
                        }
                    }
                }
            }
        };
    }
    return Tensor::from_node(std::move(node));
}

Tensor endpoint_error(const Tensor& f, const Tensor& f_hat, Norm p) {
    require_rank3(f, "endpoint_error");
    require_same_shape(f, f_hat, "endpoint_error");
    if (f.dim(0) != 2) throw ShapeError("endpoint_error: flow fields must have 2 channels");
    const int h = f.dim(1), w = f.dim(2);
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    auto a = f.values();
    auto b = f_hat.values();
    std::vector<double> out(plane);
    for (std::size_t i = 0; i < plane; ++i) {
        const double du = a[i] - b[i];
        const double dv = a[plane + i] - b[plane + i];
        out[i] = p == Norm::l2 ? std::sqrt(du * du + dv * dv) : std::abs(du) + std::abs(dv);
        if (p == Norm::l2) {
            record_kink(out[i] > 0.0);
        } else {
            record_kink(side_of(du));
            record_kink(side_of(dv));
        }
    }
    auto node = make_node({h, w}, std::move(out), {&f, &f_hat});
    if (node->requires_grad) {
        node->backward = [plane, p](Node& self) {
            const auto& a = self.parents[0]->value;
            const auto& b = self.parents[1]->value;
            for (std::size_t i = 0; i < plane; ++i) {
                const double du = a[i] - b[i];
                const double dv = a[plane + i] - b[plane + i];
                double gu = 0.0, gv = 0.0;
                if (p == Norm::l2) {
                    const double e = self.value[i];
                    if (e > 0.0) {
                        gu = du / e;
                        gv = dv / e;
                    }
                } else {
                    gu = static_cast<double>((du > 0) - (du < 0));
                    gv = static_cast<double>((dv > 0) - (dv < 0));
                }
                gu *= self.grad[i];
                gv *= self.grad[i];
                if (wants_grad(self, 0)) {
                    self.parents[0]->grad[i] += gu;
                    self.parents[0]->grad[plane + i] += gv;
                }
                if (wants_grad(self, 1)) {
                    self.parents[1]->grad[i] -= gu;
                    self.parents[1]->grad[plane + i] -= gv;
                }
            }
        };
    }
    return Tensor::from_node(std::move(node));
}

namespace kinks {

void begin() { kink_log = {true, 0xcbf29ce484222325ULL}; }

std::uint64_t end() {
    kink_log.on = false;
    return kink_log.hash;
}

}  // namespace kinks

}  // namespace focusflow
