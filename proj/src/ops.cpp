#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>

#include "kmod/autograd.hpp"

namespace kmod::op {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

bool any_requires_grad(std::initializer_list<const Tensor*> ts) {
    for (const auto* t : ts) {
        if (t->defined() && t->requires_grad()) return true;
    }
    return false;
}

void require_rank(const char* op, const Tensor& t, std::size_t rank) {
    if (t.rank() != rank) {
        throw std::invalid_argument(std::string(op) + ": expected rank-" + std::to_string(rank) +
                                    " tensor, got shape " + to_string(t.shape()));
    }
}

// Shape agreement for binary elementwise ops; a single-element operand broadcasts.
Shape binary_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape() == b.shape()) return a.shape();
    if (b.numel() == 1) return a.shape();
    if (a.numel() == 1) return b.shape();
    check_same_shape(op, a, b);
    return a.shape();
}

// Sums `g` down to the operand's length when that operand was broadcast.
std::vector<double> reduce_to(std::span<const double> g, std::size_t n) {
    if (g.size() == n) return {g.begin(), g.end()};
    double s = 0.0;
    for (double v : g) s += v;
    return {s};
}

template <typename F, typename DF>
Tensor unary(Tape& tape, const Tensor& x, F f, DF df) {
    Tensor out(x.shape());
    auto xd = x.data();
    auto od = out.data();
    for (std::size_t i = 0; i < xd.size(); ++i) od[i] = f(xd[i]);
    if (any_requires_grad({&x})) {
        tape.record({x}, out, [x, df](const Tensor& o) {
            auto g = o.grad();
            auto xd = x.data();
            auto od = o.data();
            std::vector<double> gx(g.size());
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] = g[i] * df(xd[i], od[i]);
            accumulate_grad(x, gx);
        });
    }
    return out;
}

}  // namespace

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
    Tensor out(binary_shape("add", a, b));
    auto ad = a.data(), bd = b.data();
    auto od = out.data();
    const bool ab = ad.size() == 1, bb = bd.size() == 1;
    for (std::size_t i = 0; i < od.size(); ++i) od[i] = ad[ab ? 0 : i] + bd[bb ? 0 : i];
    if (any_requires_grad({&a, &b})) {
        tape.record({a, b}, out, [a, b](const Tensor& o) {
            accumulate_grad(a, reduce_to(o.grad(), a.numel()));
            accumulate_grad(b, reduce_to(o.grad(), b.numel()));
        });
    }
    return out;
}

Tensor sub(Tape& tape, const Tensor& a, const Tensor& b) {
    Tensor out(binary_shape("sub", a, b));
    auto ad = a.data(), bd = b.data();
    auto od = out.data();
    const bool ab = ad.size() == 1, bb = bd.size() == 1;
    for (std::size_t i = 0; i < od.size(); ++i) od[i] = ad[ab ? 0 : i] - bd[bb ? 0 : i];
    if (any_requires_grad({&a, &b})) {
        tape.record({a, b}, out, [a, b](const Tensor& o) {
            accumulate_grad(a, reduce_to(o.grad(), a.numel()));
            auto gb = reduce_to(o.grad(), b.numel());
            for (auto& v : gb) v = -v;
            accumulate_grad(b, gb);
        });
    }
    return out;
}

Tensor hadamard(Tape& tape, const Tensor& a, const Tensor& b) {
    Tensor out(binary_shape("hadamard", a, b));
    auto ad = a.data(), bd = b.data();
    auto od = out.data();
    const bool ab = ad.size() == 1, bb = bd.size() == 1;
    for (std::size_t i = 0; i < od.size(); ++i) od[i] = ad[ab ? 0 : i] * bd[bb ? 0 : i];
    if (any_requires_grad({&a, &b})) {
        tape.record({a, b}, out, [a, b, ab, bb](const Tensor& o) {
            auto g = o.grad();
            auto ad = a.data(), bd = b.data();
            std::vector<double> ga(g.size()), gb(g.size());
            for (std::size_t i = 0; i < g.size(); ++i) {
                ga[i] = g[i] * bd[bb ? 0 : i];
                gb[i] = g[i] * ad[ab ? 0 : i];
            }
            if (a.requires_grad()) accumulate_grad(a, reduce_to(ga, a.numel()));
            if (b.requires_grad()) accumulate_grad(b, reduce_to(gb, b.numel()));
        });
    }
    return out;
}

Tensor scale(Tape& tape, const Tensor& x, double factor) {
    return unary(tape, x, [factor](double v) { return v * factor; },
                 [factor](double, double) { return factor; });
}

Tensor add_scalar(Tape& tape, const Tensor& x, double value) {
    return unary(tape, x, [value](double v) { return v + value; }, [](double, double) { return 1.0; });
}

Tensor leaky_relu(Tape& tape, const Tensor& x, double slope) {
    return unary(tape, x, [slope](double v) { return v > 0.0 ? v : slope * v; },
                 [slope](double v, double) { return v > 0.0 ? 1.0 : slope; });
}

Tensor tanh(Tape& tape, const Tensor& x) {
    return unary(tape, x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(Tape& tape, const Tensor& x) {
    return unary(
        tape, x,
        [](double v) {
            if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
            const double e = std::exp(v);
            return e / (1.0 + e);
        },
        [](double, double y) { return y * (1.0 - y); });
}

Tensor reshape(Tape& tape, const Tensor& x, Shape shape) {
    if (numel(shape) != x.numel()) {
        throw std::invalid_argument("reshape: cannot view " + to_string(x.shape()) + " as " + to_string(shape));
    }
    auto xd = x.data();
    Tensor out(std::move(shape), std::vector<double>(xd.begin(), xd.end()));
    if (any_requires_grad({&x})) {
        tape.record({x}, out, [x](const Tensor& o) { accumulate_grad(x, o.grad()); });
    }
    return out;
}

Tensor reduce_sum(Tape& tape, const Tensor& x) {
    double s = 0.0;
    for (double v : x.data()) s += v;
    Tensor out = Tensor::scalar(s);
    if (any_requires_grad({&x})) {
        tape.record({x}, out, [x](const Tensor& o) {
            std::vector<double> g(x.numel(), o.grad()[0]);
            accumulate_grad(x, g);
        });
    }
    return out;
}

Tensor reduce_mean(Tape& tape, const Tensor& x) {
    double s = 0.0;
    for (double v : x.data()) s += v;
    const double n = static_cast<double>(x.numel());
    Tensor out = Tensor::scalar(s / n);
    if (any_requires_grad({&x})) {
        tape.record({x}, out, [x, n](const Tensor& o) {
            std::vector<double> g(x.numel(), o.grad()[0] / n);
            accumulate_grad(x, g);
        });
    }
    return out;
}

Tensor outer(Tape& tape, const Tensor& u, const Tensor& v) {
    require_rank("outer", u, 1);
    require_rank("outer", v, 1);
    const std::size_t p = u.numel(), q = v.numel();
    Tensor out(Shape{p, q});
    auto ud = u.data(), vd = v.data();
    auto od = out.data();
    for (std::size_t i = 0; i < p; ++i) {
        for (std::size_t j = 0; j < q; ++j) od[i * q + j] = ud[i] * vd[j];
    }
    if (any_requires_grad({&u, &v})) {
        tape.record({u, v}, out, [u, v, p, q](const Tensor& o) {
            auto g = o.grad();
            auto ud = u.data(), vd = v.data();
            if (u.requires_grad()) {
                std::vector<double> gu(p, 0.0);
                for (std::size_t i = 0; i < p; ++i) {
                    for (std::size_t j = 0; j < q; ++j) gu[i] += g[i * q + j] * vd[j];
                }
                accumulate_grad(u, gu);
            }
            if (v.requires_grad()) {
                std::vector<double> gv(q, 0.0);
                for (std::size_t i = 0; i < p; ++i) {
                    for (std::size_t j = 0; j < q; ++j) gv[j] += g[i * q + j] * ud[i];
                }
                accumulate_grad(v, gv);
            }
        });
    }
    return out;
}

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
    require_rank("matmul", a, 2);
    require_rank("matmul", b, 2);
    const auto m = a.size(0), k = a.size(1), n = b.size(1);
    if (b.size(0) != k) {
        throw std::invalid_argument("matmul: inner dimensions differ: " + to_string(a.shape()) + " x " +
                                    to_string(b.shape()));
    }
    Tensor out(Shape{m, n});
    MapMat(out.data().data(), m, n).noalias() =
        ConstMapMat(a.data().data(), m, k) * ConstMapMat(b.data().data(), k, n);
    if (any_requires_grad({&a, &b})) {
        tape.record({a, b}, out, [a, b, m, k, n](const Tensor& o) {
            ConstMapMat g(o.grad().data(), m, n);
            if (a.requires_grad()) {
                std::vector<double> ga(m * k);
                MapMat(ga.data(), m, k).noalias() = g * ConstMapMat(b.data().data(), k, n).transpose();
                accumulate_grad(a, ga);
            }
            if (b.requires_grad()) {
                std::vector<double> gb(k * n);
                MapMat(gb.data(), k, n).noalias() = ConstMapMat(a.data().data(), m, k).transpose() * g;
                accumulate_grad(b, gb);
            }
        });
    }
    return out;
}

Tensor linear(Tape& tape, const Tensor& x, const Tensor& weight, const Tensor& bias) {
    require_rank("linear", x, 2);
    require_rank("linear", weight, 2);
    const auto n = x.size(0), in = x.size(1), out_f = weight.size(0);
    if (weight.size(1) != in) {
        throw std::invalid_argument("linear: input " + to_string(x.shape()) + " incompatible with weight " +
                                    to_string(weight.shape()));
    }
    if (bias.defined() && bias.shape() != Shape{out_f}) {
        throw std::invalid_argument("linear: bias shape " + to_string(bias.shape()) + " does not match " +
                                    std::to_string(out_f) + " outputs");
    }
    Tensor out(Shape{n, out_f});
    MapMat y(out.data().data(), n, out_f);
    y.noalias() = ConstMapMat(x.data().data(), n, in) * ConstMapMat(weight.data().data(), out_f, in).transpose();
    if (bias.defined()) {
        auto bd = bias.data();
        for (std::size_t r = 0; r < n; ++r) {
            for (std::size_t c = 0; c < out_f; ++c) y(r, c) += bd[c];
        }
    }
    if (any_requires_grad({&x, &weight, &bias})) {
        tape.record({x, weight, bias}, out, [x, weight, bias, n, in, out_f](const Tensor& o) {
            ConstMapMat g(o.grad().data(), n, out_f);
            if (x.requires_grad()) {
                std::vector<double> gx(n * in);
                MapMat(gx.data(), n, in).noalias() = g * ConstMapMat(weight.data().data(), out_f, in);
                accumulate_grad(x, gx);
            }
            if (weight.requires_grad()) {
                std::vector<double> gw(out_f * in);
                MapMat(gw.data(), out_f, in).noalias() = g.transpose() * ConstMapMat(x.data().data(), n, in);
                accumulate_grad(weight, gw);
            }
            if (bias.defined() && bias.requires_grad()) {
                std::vector<double> gb(out_f, 0.0);
                for (std::size_t r = 0; r < n; ++r) {
                    for (std::size_t c = 0; c < out_f; ++c) gb[c] += g(r, c);
                }
                accumulate_grad(bias, gb);
            }
        });
    }
    return out;
}

namespace {

struct ConvGeometry {
    std::size_t n, c_in, h, w, c_out, k, stride, pad, oh, ow;
    std::size_t patch() const { return c_in * k * k; }
    std::size_t pixels() const { return oh * ow; }
};

// col is [c_in*k*k, oh*ow] row-major.
void im2col(const double* img, const ConvGeometry& g, double* col) {
    const std::size_t P = g.pixels();
    for (std::size_t c = 0; c < g.c_in; ++c) {
        for (std::size_t ky = 0; ky < g.k; ++ky) {
            for (std::size_t kx = 0; kx < g.k; ++kx) {
                double* row = col + ((c * g.k + ky) * g.k + kx) * P;
                for (std::size_t oy = 0; oy < g.oh; ++oy) {
                    const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
                    for (std::size_t ox = 0; ox < g.ow; ++ox) {
                        const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
                        const bool inside = iy >= 0 && ix >= 0 && iy < static_cast<long>(g.h) &&
                                            ix < static_cast<long>(g.w);
                        row[oy * g.ow + ox] = inside ? img[(c * g.h + iy) * g.w + ix] : 0.0;
                    }
                }
            }
        }
    }
}

void col2im(const double* col, const ConvGeometry& g, double* img) {
    const std::size_t P = g.pixels();
    for (std::size_t c = 0; c < g.c_in; ++c) {
        for (std::size_t ky = 0; ky < g.k; ++ky) {
            for (std::size_t kx = 0; kx < g.k; ++kx) {
                const double* row = col + ((c * g.k + ky) * g.k + kx) * P;
                for (std::size_t oy = 0; oy < g.oh; ++oy) {
                    const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
                    if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
                    for (std::size_t ox = 0; ox < g.ow; ++ox) {
                        const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
                        if (ix < 0 || ix >= static_cast<long>(g.w)) continue;
                        img[(c * g.h + iy) * g.w + ix] += row[oy * g.ow + ox];
                    }
                }
            }
        }
    }
}

}  // namespace

Tensor conv2d(Tape& tape, const Tensor& input, const Tensor& weight, const Tensor& bias, std::size_t stride,
              std::size_t padding) {
    require_rank("conv2d input", input, 4);
    require_rank("conv2d weight", weight, 4);
    if (stride == 0) throw std::invalid_argument("conv2d: stride must be >= 1");
    ConvGeometry g{};
    g.n = input.size(0);
    g.c_in = input.size(1);
    g.h = input.size(2);
    g.w = input.size(3);
    g.c_out = weight.size(0);
    g.k = weight.size(2);
    g.stride = stride;
    g.pad = padding;
    if (weight.size(1) != g.c_in) {
        throw std::invalid_argument("conv2d: input has " + std::to_string(g.c_in) + " channels but weight " +
                                    to_string(weight.shape()) + " expects " + std::to_string(weight.size(1)));
    }
    if (weight.size(3) != g.k) throw std::invalid_argument("conv2d: only square kernels are supported");
    if (g.k > g.h + 2 * padding || g.k > g.w + 2 * padding) {
        throw std::invalid_argument("conv2d: kernel " + std::to_string(g.k) + " larger than padded input " +
                                    to_string(input.shape()));
    }
    if (bias.defined() && bias.shape() != Shape{g.c_out}) {
        throw std::invalid_argument("conv2d: bias shape " + to_string(bias.shape()) + " does not match " +
                                    std::to_string(g.c_out) + " output channels");
    }
    g.oh = (g.h + 2 * padding - g.k) / stride + 1;
    g.ow = (g.w + 2 * padding - g.k) / stride + 1;

    const std::size_t K = g.patch(), P = g.pixels();
    const bool record = tape.enabled() && any_requires_grad({&input, &weight, &bias});
    auto cols = std::make_shared<std::vector<double>>(record ? g.n * K * P : K * P);

    Tensor out(Shape{g.n, g.c_out, g.oh, g.ow});
    ConstMapMat W(weight.data().data(), g.c_out, K);
    const double* in = input.data().data();
    double* od = out.data().data();
    for (std::size_t s = 0; s < g.n; ++s) {
        double* col = cols->data() + (record ? s * K * P : 0);
        im2col(in + s * g.c_in * g.h * g.w, g, col);
        MapMat Y(od + s * g.c_out * P, g.c_out, P);
        Y.noalias() = W * ConstMapMat(col, K, P);
        if (bias.defined()) {
            auto bd = bias.data();
            for (std::size_t c = 0; c < g.c_out; ++c) Y.row(c).array() += bd[c];
        }
    }

    if (record) {
        tape.record({input, weight, bias}, out, [input, weight, bias, g, cols](const Tensor& o) {
            const std::size_t K = g.patch(), P = g.pixels();
            const double* gd = o.grad().data();
            ConstMapMat W(weight.data().data(), g.c_out, K);
            if (weight.requires_grad()) {
                std::vector<double> gw(g.c_out * K, 0.0);
                MapMat GW(gw.data(), g.c_out, K);
                for (std::size_t s = 0; s < g.n; ++s) {
                    GW.noalias() += ConstMapMat(gd + s * g.c_out * P, g.c_out, P) *
                                    ConstMapMat(cols->data() + s * K * P, K, P).transpose();
                }
                accumulate_grad(weight, gw);
            }
            if (bias.defined() && bias.requires_grad()) {
                std::vector<double> gb(g.c_out, 0.0);
                for (std::size_t s = 0; s < g.n; ++s) {
                    for (std::size_t c = 0; c < g.c_out; ++c) {
                        const double* row = gd + (s * g.c_out + c) * P;
                        for (std::size_t p = 0; p < P; ++p) gb[c] += row[p];
                    }
                }
                accumulate_grad(bias, gb);
            }
            if (input.requires_grad()) {
                std::vector<double> gx(input.numel(), 0.0);
                RowMat dcol(K, P);
                for (std::size_t s = 0; s < g.n; ++s) {
                    dcol.noalias() = W.transpose() * ConstMapMat(gd + s * g.c_out * P, g.c_out, P);
                    col2im(dcol.data(), g, gx.data() + s * g.c_in * g.h * g.w);
                }
                accumulate_grad(input, gx);
            }
        });
    }
    return out;
}

Tensor upsample_nearest(Tape& tape, const Tensor& x, std::size_t factor) {
    require_rank("upsample_nearest", x, 4);
    if (factor == 0) throw std::invalid_argument("upsample_nearest: factor must be >= 1");
    const auto n = x.size(0), c = x.size(1), h = x.size(2), w = x.size(3);
    const auto oh = h * factor, ow = w * factor;
    Tensor out(Shape{n, c, oh, ow});
    auto xd = x.data();
    auto od = out.data();
    for (std::size_t p = 0; p < n * c; ++p) {
        for (std::size_t y = 0; y < oh; ++y) {
            for (std::size_t xx = 0; xx < ow; ++xx) {
                od[(p * oh + y) * ow + xx] = xd[(p * h + y / factor) * w + xx / factor];
            }
        }
    }
    if (any_requires_grad({&x})) {
        tape.record({x}, out, [x, n, c, h, w, factor](const Tensor& o) {
            const auto oh = h * factor, ow = w * factor;
            auto g = o.grad();
            std::vector<double> gx(x.numel(), 0.0);
            for (std::size_t p = 0; p < n * c; ++p) {
                for (std::size_t y = 0; y < oh; ++y) {
                    for (std::size_t xx = 0; xx < ow; ++xx) {
                        gx[(p * h + y / factor) * w + xx / factor] += g[(p * oh + y) * ow + xx];
                    }
                }
            }
            accumulate_grad(x, gx);
        });
    }
    return out;
}

Tensor avg_pool(Tape& tape, const Tensor& x, std::size_t factor) {
    require_rank("avg_pool", x, 4);
    if (factor == 0) throw std::invalid_argument("avg_pool: factor must be >= 1");
    const auto n = x.size(0), c = x.size(1), h = x.size(2), w = x.size(3);
    if (h % factor != 0 || w % factor != 0) {
        throw std::invalid_argument("avg_pool: spatial size of " + to_string(x.shape()) +
                                    " not divisible by factor " + std::to_string(factor));
    }
    const auto oh = h / factor, ow = w / factor;
    const double inv = 1.0 / static_cast<double>(factor * factor);
    Tensor out(Shape{n, c, oh, ow});
    auto xd = x.data();
    auto od = out.data();
    for (std::size_t p = 0; p < n * c; ++p) {
        for (std::size_t y = 0; y < h; ++y) {
            for (std::size_t xx = 0; xx < w; ++xx) {
                od[(p * oh + y / factor) * ow + xx / factor] += xd[(p * h + y) * w + xx] * inv;
            }
        }
    }
    if (any_requires_grad({&x})) {
        tape.record({x}, out, [x, n, c, h, w, factor, inv](const Tensor& o) {
            const auto oh = h / factor, ow = w / factor;
            auto g = o.grad();
            std::vector<double> gx(x.numel());
            for (std::size_t p = 0; p < n * c; ++p) {
                for (std::size_t y = 0; y < h; ++y) {
                    for (std::size_t xx = 0; xx < w; ++xx) {
                        gx[(p * h + y) * w + xx] = g[(p * oh + y / factor) * ow + xx / factor] * inv;
                    }
                }
            }
            accumulate_grad(x, gx);
        });
    }
    return out;
}

Tensor gather_rows(Tape& tape, const Tensor& x, const std::vector<std::size_t>& rows) {
    const std::size_t n_rows = x.size(0);
    const std::size_t width = x.numel() / n_rows;
    if (rows.empty()) throw std::invalid_argument("gather_rows: empty row list");
    for (auto r : rows) {
        if (r >= n_rows) {
            throw std::out_of_range("gather_rows: row " + std::to_string(r) + " out of range for shape " +
                                    to_string(x.shape()));
        }
    }
    Tensor out(Shape{rows.size(), width});
    auto xd = x.data();
    auto od = out.data();
    for (std::size_t i = 0; i < rows.size(); ++i) {
        std::copy_n(xd.begin() + rows[i] * width, width, od.begin() + i * width);
    }
    if (any_requires_grad({&x})) {
        tape.record({x}, out, [x, rows, width](const Tensor& o) {
            auto g = o.grad();
            std::vector<double> gx(x.numel(), 0.0);
            for (std::size_t i = 0; i < rows.size(); ++i) {
                for (std::size_t j = 0; j < width; ++j) gx[rows[i] * width + j] += g[i * width + j];
            }
            accumulate_grad(x, gx);
        });
    }
    return out;
}

Tensor scatter_rows(Tape& tape, const Tensor& base, const std::vector<std::size_t>& rows, const Tensor& values) {
    const std::size_t n_rows = base.size(0);
    const std::size_t width = base.numel() / n_rows;
    if (values.size(0) != rows.size() || values.numel() != rows.size() * width) {
        throw std::invalid_argument("scatter_rows: values " + to_string(values.shape()) + " do not match " +
                                    std::to_string(rows.size()) + " rows of width " + std::to_string(width));
    }
    std::vector<char> replaced(n_rows, 0);
    for (auto r : rows) {
        if (r >= n_rows) {
            throw std::out_of_range("scatter_rows: row " + std::to_string(r) + " out of range for shape " +
                                    to_string(base.shape()));
        }
        if (replaced[r]) throw std::invalid_argument("scatter_rows: duplicate row " + std::to_string(r));
        replaced[r] = 1;
    }
    auto bd = base.data();
    Tensor out(base.shape(), std::vector<double>(bd.begin(), bd.end()));
    auto od = out.data();
    auto vd = values.data();
    for (std::size_t i = 0; i < rows.size(); ++i) {
        std::copy_n(vd.begin() + i * width, width, od.begin() + rows[i] * width);
    }
    if (any_requires_grad({&base, &values})) {
        tape.record({base, values}, out, [base, values, rows, width, replaced](const Tensor& o) {
            auto g = o.grad();
            if (base.requires_grad()) {
                std::vector<double> gb(g.begin(), g.end());
                for (std::size_t r = 0; r < replaced.size(); ++r) {
                    if (replaced[r]) std::fill_n(gb.begin() + r * width, width, 0.0);
                }
                accumulate_grad(base, gb);
            }
            if (values.requires_grad()) {
                std::vector<double> gv(values.numel());
                for (std::size_t i = 0; i < rows.size(); ++i) {
                    std::copy_n(g.begin() + rows[i] * width, width, gv.begin() + i * width);
                }
                accumulate_grad(values, gv);
            }
        });
    }
    return out;
}

Tensor bce_with_logits(Tape& tape, const Tensor& logits, const Tensor& targets) {
    check_same_shape("bce_with_logits", logits, targets);
    auto z = logits.data();
    auto y = targets.data();
    const double n = static_cast<double>(z.size());
    double total = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
        // max(z,0) - z*y + log(1 + exp(-|z|))
        total += std::max(z[i], 0.0) - z[i] * y[i] + std::log1p(std::exp(-std::abs(z[i])));
    }
    Tensor out = Tensor::scalar(total / n);
    if (any_requires_grad({&logits, &targets})) {
        tape.record({logits, targets}, out, [logits, targets, n](const Tensor& o) {
            const double go = o.grad()[0];
            auto z = logits.data();
            auto y = targets.data();
            if (logits.requires_grad()) {
                std::vector<double> gz(z.size());
                for (std::size_t i = 0; i < z.size(); ++i) {
                    const double s = z[i] >= 0.0 ? 1.0 / (1.0 + std::exp(-z[i]))
                                                 : std::exp(z[i]) / (1.0 + std::exp(z[i]));
                    gz[i] = go * (s - y[i]) / n;
                }
                accumulate_grad(logits, gz);
            }
            if (targets.requires_grad()) {
                std::vector<double> gy(z.size());
                for (std::size_t i = 0; i < z.size(); ++i) gy[i] = -go * z[i] / n;
                accumulate_grad(targets, gy);
            }
        });
    }
    return out;
}

}  // namespace kmod::op
