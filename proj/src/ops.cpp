#include "fsr/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace fsr {

namespace {

// Offsets of an operand of shape `in` inside a broadcast result of shape `out`.
std::vector<std::size_t> broadcast_offsets(const Shape& in, const Shape& out) {
    const std::size_t rank = out.size();
    const std::size_t lead = rank - in.size();
    std::vector<std::size_t> stride(rank, 0);
    std::size_t s = 1;
    for (std::size_t i = in.size(); i-- > 0;) {
        stride[lead + i] = in[i] == 1 ? 0 : s;
        s *= in[i];
    }
    const std::size_t n = shape_numel(out);
    std::vector<std::size_t> offsets(n);
    std::vector<std::size_t> idx(rank, 0);
    std::size_t off = 0;
    for (std::size_t flat = 0; flat < n; ++flat) {
        offsets[flat] = off;
        for (std::size_t ax = rank; ax-- > 0;) {
            ++idx[ax];
            off += stride[ax];
            if (idx[ax] < out[ax]) break;
            off -= stride[ax] * idx[ax];
            idx[ax] = 0;
        }
    }
    return offsets;
}

template <typename Fwd, typename Da, typename Db>
Tensor binary(const Tensor& a, const Tensor& b, const char* name, Fwd fwd, Da da, Db db) {
    if (!a.defined() || !b.defined()) throw ShapeError(std::string(name) + " needs two operands");
    Shape out_shape = broadcast_shape(a.shape(), b.shape());
    const std::size_t n = shape_numel(out_shape);
    auto av = a.data();
    auto bv = b.data();
    std::vector<double> out(n);
    if (a.shape() == b.shape()) {
        for (std::size_t i = 0; i < n; ++i) out[i] = fwd(av[i], bv[i]);
        return Tensor::make_result(std::move(out_shape), std::move(out), {a, b}, name,
                                   [a, b, da, db](std::span<const double> g) {
                                       auto av = a.data();
                                       auto bv = b.data();
                                       const std::size_t n = g.size();
                                       if (a.requires_grad()) {
                                           std::vector<double> ga(n);
                                           for (std::size_t i = 0; i < n; ++i)
                                               ga[i] = g[i] * da(av[i], bv[i]);
                                           Tensor::accumulate_grad(a, ga);
                                       }
                                       if (b.requires_grad()) {
                                           std::vector<double> gb(n);
                                           for (std::size_t i = 0; i < n; ++i)
                                               gb[i] = g[i] * db(av[i], bv[i]);
                                           Tensor::accumulate_grad(b, gb);
                                       }
                                   });
    }
    auto oa = broadcast_offsets(a.shape(), out_shape);
    auto ob = broadcast_offsets(b.shape(), out_shape);
    for (std::size_t i = 0; i < n; ++i) out[i] = fwd(av[oa[i]], bv[ob[i]]);
    return Tensor::make_result(
        std::move(out_shape), std::move(out), {a, b}, name,
        [a, b, da, db, oa = std::move(oa), ob = std::move(ob)](std::span<const double> g) {
            auto av = a.data();
            auto bv = b.data();
            if (a.requires_grad()) {
                std::vector<double> ga(a.numel(), 0.0);
                for (std::size_t i = 0; i < g.size(); ++i)
                    ga[oa[i]] += g[i] * da(av[oa[i]], bv[ob[i]]);
                Tensor::accumulate_grad(a, ga);
            }
            if (b.requires_grad()) {
                std::vector<double> gb(b.numel(), 0.0);
                for (std::size_t i = 0; i < g.size(); ++i)
                    gb[ob[i]] += g[i] * db(av[oa[i]], bv[ob[i]]);
                Tensor::accumulate_grad(b, gb);
            }
        });
}

// Unary op whose derivative is expressed through (input, output).
template <typename Fwd, typename D>
Tensor unary(const Tensor& a, const char* name, Fwd fwd, D d) {
    auto av = a.data();
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i]);
    std::vector<double> saved = out;
    return Tensor::make_result(a.shape(), std::move(out), {a}, name,
                               [a, d, saved = std::move(saved)](std::span<const double> g) {
                                   auto av = a.data();
                                   std::vector<double> ga(g.size());
                                   for (std::size_t i = 0; i < g.size(); ++i)
                                       ga[i] = g[i] * d(av[i], saved[i]);
                                   Tensor::accumulate_grad(a, ga);
                               });
}

struct AxisSplit {
    std::size_t outer = 1, extent = 1, inner = 1;
};

AxisSplit split_at(const Shape& shape, std::size_t axis) {
    if (axis >= shape.size())
        throw ShapeError("axis " + std::to_string(axis) + " out of range for " + shape_str(shape));
    AxisSplit s;
    for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
    s.extent = shape[axis];
    for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
    return s;
}

struct ConvGeometry {
    std::size_t n, cin, h, w, cout, kh, kw, sh, sw, ph, pw, oh, ow;
};

ConvGeometry conv_geometry(const Shape& in, const Shape& k, std::size_t sh, std::size_t sw,
                           std::size_t ph, std::size_t pw) {
    if (in.size() != 4 || k.size() != 4)
        throw ShapeError("conv expects rank-4 input and kernel, got " + shape_str(in) + " and " +
                         shape_str(k));
    if (in[1] != k[1])
        throw ShapeError("conv channel mismatch: input " + shape_str(in) + " kernel " +
                         shape_str(k));
    if (sh == 0 || sw == 0) throw ShapeError("conv stride must be positive");
    ConvGeometry g{in[0], in[1], in[2], in[3], k[0], k[2], k[3], sh, sw, ph, pw, 0, 0};
    if (g.h + 2 * ph < g.kh || g.w + 2 * pw < g.kw)
        throw ShapeError("conv kernel " + shape_str(k) + " larger than padded input " +
                         shape_str(in));
    g.oh = (g.h + 2 * ph - g.kh) / sh + 1;
    g.ow = (g.w + 2 * pw - g.kw) / sw + 1;
    return g;
}

// Output index range [lo, hi) for which o*s - p + k lands inside [0, size).
inline void valid_range(std::size_t out_size, std::size_t in_size, std::size_t s, std::size_t p,
                        std::size_t k, std::size_t& lo, std::size_t& hi) {
    // o*s + k >= p  and  o*s + k < in_size + p
    lo = k >= p ? 0 : (p - k + s - 1) / s;
    std::size_t limit = in_size + p;  // exclusive bound on o*s + k
    hi = limit > k ? std::min(out_size, (limit - k + s - 1) / s) : 0;
    if (hi < lo) hi = lo;
}

Tensor conv2d_general(const Tensor& input, const Tensor& kernel, const Tensor& bias,
                      std::size_t sh, std::size_t sw, std::size_t ph, std::size_t pw) {
    const ConvGeometry g = conv_geometry(input.shape(), kernel.shape(), sh, sw, ph, pw);
    if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != g.cout))
        throw ShapeError("conv bias shape " + shape_str(bias.shape()) + " does not match " +
                         std::to_string(g.cout) + " output channels");
    auto x = input.data();
    auto k = kernel.data();
    std::vector<double> out(g.n * g.cout * g.oh * g.ow, 0.0);
    const std::size_t in_plane = g.h * g.w;
    const std::size_t out_plane = g.oh * g.ow;
    for (std::size_t n = 0; n < g.n; ++n) {
        for (std::size_t oc = 0; oc < g.cout; ++oc) {
            double* o = out.data() + (n * g.cout + oc) * out_plane;
            if (bias.defined()) std::fill(o, o + out_plane, bias.data()[oc]);
            for (std::size_t ic = 0; ic < g.cin; ++ic) {
                const double* xi = x.data() + (n * g.cin + ic) * in_plane;
                for (std::size_t ky = 0; ky < g.kh; ++ky) {
                    std::size_t oy0, oy1;
                    valid_range(g.oh, g.h, g.sh, g.ph, ky, oy0, oy1);
                    for (std::size_t kx = 0; kx < g.kw; ++kx) {
                        const double wv = k[((oc * g.cin + ic) * g.kh + ky) * g.kw + kx];
                        std::size_t ox0, ox1;
                        valid_range(g.ow, g.w, g.sw, g.pw, kx, ox0, ox1);
                        for (std::size_t oy = oy0; oy < oy1; ++oy) {
                            const double* row = xi + (oy * g.sh + ky - g.ph) * g.w;
                            double* orow = o + oy * g.ow;
                            for (std::size_t ox = ox0; ox < ox1; ++ox)
                                orow[ox] += wv * row[ox * g.sw + kx - g.pw];
                        }
                    }
                }
            }
        }
    }
    return Tensor::make_result(
        Shape{g.n, g.cout, g.oh, g.ow}, std::move(out), {input, kernel, bias}, "conv2d",
        [input, kernel, bias, g](std::span<const double> grad) {
            auto x = input.data();
            auto k = kernel.data();
            const std::size_t in_plane = g.h * g.w;
            const std::size_t out_plane = g.oh * g.ow;
            const bool want_x = input.requires_grad();
            const bool want_k = kernel.requires_grad();
            std::vector<double> gx(want_x ? x.size() : 0, 0.0);
            std::vector<double> gk(want_k ? k.size() : 0, 0.0);
            for (std::size_t n = 0; n < g.n; ++n) {
                for (std::size_t oc = 0; oc < g.cout; ++oc) {
                    const double* go = grad.data() + (n * g.cout + oc) * out_plane;
                    for (std::size_t ic = 0; ic < g.cin; ++ic) {
                        const std::size_t xoff = (n * g.cin + ic) * in_plane;
                        for (std::size_t ky = 0; ky < g.kh; ++ky) {
                            std::size_t oy0, oy1;
                            valid_range(g.oh, g.h, g.sh, g.ph, ky, oy0, oy1);
                            for (std::size_t kx = 0; kx < g.kw; ++kx) {
                                const std::size_t kidx = ((oc * g.cin + ic) * g.kh + ky) * g.kw + kx;
                                const double wv = k[kidx];
                                std::size_t ox0, ox1;
                                valid_range(g.ow, g.w, g.sw, g.pw, kx, ox0, ox1);
                                double acc = 0.0;
                                for (std::size_t oy = oy0; oy < oy1; ++oy) {
                                    const std::size_t rowoff = xoff + (oy * g.sh + ky - g.ph) * g.w;
                                    const double* grow = go + oy * g.ow;
                                    if (want_k)
                                        for (std::size_t ox = ox0; ox < ox1; ++ox)
                                            acc += grow[ox] * x[rowoff + ox * g.sw + kx - g.pw];
                                    if (want_x)
                                        for (std::size_t ox = ox0; ox < ox1; ++ox)
                                            gx[rowoff + ox * g.sw + kx - g.pw] += wv * grow[ox];
                                }
                                if (want_k) gk[kidx] += acc;
                            }
                        }
                    }
                }
            }
            if (want_x) Tensor::accumulate_grad(input, gx);
            if (want_k) Tensor::accumulate_grad(kernel, gk);
            if (bias.defined() && bias.requires_grad()) {
                std::vector<double> gb(g.cout, 0.0);
                for (std::size_t n = 0; n < g.n; ++n)
                    for (std::size_t oc = 0; oc < g.cout; ++oc) {
                        const double* go = grad.data() + (n * g.cout + oc) * out_plane;
                        for (std::size_t i = 0; i < out_plane; ++i) gb[oc] += go[i];
                    }
                Tensor::accumulate_grad(bias, gb);
            }
        });
}

}  // namespace

Shape broadcast_shape(const Shape& a, const Shape& b) {
    const std::size_t rank = std::max(a.size(), b.size());
    Shape out(rank);
    for (std::size_t i = 0; i < rank; ++i) {
        std::size_t da = i + a.size() >= rank ? a[i + a.size() - rank] : 1;
        std::size_t db = i + b.size() >= rank ? b[i + b.size() - rank] : 1;
        if (da != db && da != 1 && db != 1)
            throw ShapeError("cannot broadcast shapes " + shape_str(a) + " and " + shape_str(b));
        out[i] = std::max(da, db);
    }
    return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
    return binary(
        a, b, "add", [](double x, double y) { return x + y; },
        [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return binary(
        a, b, "sub", [](double x, double y) { return x - y; },
        [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
    return binary(
        a, b, "hadamard", [](double x, double y) { return x * y; },
        [](double, double y) { return y; }, [](double x, double) { return x; });
}

Tensor scale(const Tensor& a, double s) {
    return unary(
        a, "scalar_mul", [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Tensor add_scalar(const Tensor& a, double s) {
    return unary(
        a, "add_scalar", [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Tensor relu(const Tensor& a) {
    return unary(
        a, "relu", [](double x) { return x > 0.0 ? x : 0.0; },
        [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor max_with_zero(const Tensor& a) {
    return unary(
        a, "max_with_zero", [](double x) { return std::max(x, 0.0); },
        [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& a) {
    return unary(
        a, "sigmoid",
        [](double x) {
            if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
            const double e = std::exp(x);
            return e / (1.0 + e);
        },
        [](double, double y) { return y * (1.0 - y); });
}

Tensor exp(const Tensor& a) {
    return unary(
        a, "exp", [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
    for (double v : a.data())
        if (!(v > 0.0)) throw DomainError("log of non-positive value " + std::to_string(v));
    return unary(
        a, "log", [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor clamp_min(const Tensor& a, double floor) {
    return unary(
        a, "clamp_min", [floor](double x) { return std::max(x, floor); },
        [floor](double x, double) { return x > floor ? 1.0 : 0.0; });
}

Tensor elementwise(Elementwise kind, const Tensor& a, const Tensor& b, double scalar) {
    switch (kind) {
        case Elementwise::add: return add(a, b);
        case Elementwise::sub: return sub(a, b);
        case Elementwise::hadamard: return hadamard(a, b);
        case Elementwise::scalar_mul: return scale(a, scalar);
        case Elementwise::relu: return relu(a);
        case Elementwise::sigmoid: return sigmoid(a);
        case Elementwise::exp: return exp(a);
        case Elementwise::log: return log(a);
        case Elementwise::max_with_zero: return max_with_zero(a);
    }
    throw std::invalid_argument("unknown elementwise kind");
}

Tensor reduce(Reduction kind, const Tensor& a, const std::vector<std::size_t>& axes) {
    const Shape& in = a.shape();
    std::vector<bool> reduced(in.size(), false);
    for (auto ax : axes) {
        if (ax >= in.size())
            throw ShapeError("invalid reduction axis " + std::to_string(ax) + " for " +
                             shape_str(in));
        if (reduced[ax]) throw ShapeError("duplicate reduction axis " + std::to_string(ax));
        reduced[ax] = true;
    }
    Shape out_shape;
    std::vector<std::size_t> out_stride(in.size(), 0);
    {
        std::size_t s = 1;
        for (std::size_t i = in.size(); i-- > 0;) {
            if (reduced[i]) continue;
            out_stride[i] = s;
            s *= in[i];
        }
        for (std::size_t i = 0; i < in.size(); ++i)
            if (!reduced[i]) out_shape.push_back(in[i]);
    }
    const std::size_t n = a.numel();
    const std::size_t m = shape_numel(out_shape);
    std::vector<std::size_t> target(n);
    {
        std::vector<std::size_t> idx(in.size(), 0);
        std::size_t off = 0;
        for (std::size_t flat = 0; flat < n; ++flat) {
            target[flat] = off;
            for (std::size_t ax = in.size(); ax-- > 0;) {
                ++idx[ax];
                off += out_stride[ax];
                if (idx[ax] < in[ax]) break;
                off -= out_stride[ax] * idx[ax];
                idx[ax] = 0;
            }
        }
    }
    auto av = a.data();
    const double count = static_cast<double>(n / m);
    std::vector<double> out(m, kind == Reduction::max ? -std::numeric_limits<double>::infinity() : 0.0);
    std::vector<std::size_t> arg(kind == Reduction::max ? m : 0, 0);
    for (std::size_t i = 0; i < n; ++i) {
        if (kind == Reduction::max) {
            if (av[i] > out[target[i]]) {
                out[target[i]] = av[i];
                arg[target[i]] = i;
            }
        } else {
            out[target[i]] += av[i];
        }
    }
    if (kind == Reduction::mean)
        for (auto& v : out) v /= count;
    const char* name = kind == Reduction::sum ? "sum" : kind == Reduction::mean ? "mean" : "max";
    return Tensor::make_result(
        std::move(out_shape), std::move(out), {a}, name,
        [a, kind, count, target = std::move(target), arg = std::move(arg)](std::span<const double> g) {
            std::vector<double> ga(a.numel(), 0.0);
            if (kind == Reduction::max) {
                for (std::size_t j = 0; j < g.size(); ++j) ga[arg[j]] = g[j];
            } else {
                const double f = kind == Reduction::mean ? 1.0 / count : 1.0;
                for (std::size_t i = 0; i < ga.size(); ++i) ga[i] = g[target[i]] * f;
            }
            Tensor::accumulate_grad(a, ga);
        });
}

Tensor sum(const Tensor& a, const std::vector<std::size_t>& axes) { return reduce(Reduction::sum, a, axes); }
Tensor mean(const Tensor& a, const std::vector<std::size_t>& axes) { return reduce(Reduction::mean, a, axes); }
Tensor max(const Tensor& a, const std::vector<std::size_t>& axes) { return reduce(Reduction::max, a, axes); }

Tensor sum_all(const Tensor& a) {
    std::vector<std::size_t> axes(a.rank());
    std::iota(axes.begin(), axes.end(), 0);
    return sum(a, axes);
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
        throw ShapeError("matmul dimension mismatch: " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    auto av = a.data();
    auto bv = b.data();
    std::vector<double> out(m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
            const double s = av[i * k + p];
            for (std::size_t j = 0; j < n; ++j) out[i * n + j] += s * bv[p * n + j];
        }
    return Tensor::make_result(Shape{m, n}, std::move(out), {a, b}, "matmul",
                               [a, b, m, k, n](std::span<const double> g) {
                                   auto av = a.data();
                                   auto bv = b.data();
                                   if (a.requires_grad()) {
                                       std::vector<double> ga(m * k, 0.0);
                                       for (std::size_t i = 0; i < m; ++i)
                                           for (std::size_t p = 0; p < k; ++p) {
                                               double acc = 0.0;
                                               for (std::size_t j = 0; j < n; ++j)
                                                   acc += g[i * n + j] * bv[p * n + j];
                                               ga[i * k + p] = acc;
                                           }
                                       Tensor::accumulate_grad(a, ga);
                                   }
                                   if (b.requires_grad()) {
                                       std::vector<double> gb(k * n, 0.0);
                                       for (std::size_t i = 0; i < m; ++i)
                                           for (std::size_t p = 0; p < k; ++p) {
                                               const double s = av[i * k + p];
                                               for (std::size_t j = 0; j < n; ++j)
                                                   gb[p * n + j] += s * g[i * n + j];
                                           }
                                       Tensor::accumulate_grad(b, gb);
                                   }
                               });
}

Tensor transpose(const Tensor& a) {
    if (a.rank() != 2) throw ShapeError("transpose expects a matrix, got " + shape_str(a.shape()));
    const std::size_t r = a.dim(0), c = a.dim(1);
    auto av = a.data();
    std::vector<double> out(r * c);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[j * r + i] = av[i * c + j];
    return Tensor::make_result(Shape{c, r}, std::move(out), {a}, "transpose",
                               [a, r, c](std::span<const double> g) {
                                   std::vector<double> ga(r * c);
                                   for (std::size_t i = 0; i < r; ++i)
                                       for (std::size_t j = 0; j < c; ++j) ga[i * c + j] = g[j * r + i];
                                   Tensor::accumulate_grad(a, ga);
                               });
}

Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias, std::size_t stride,
              std::size_t padding) {
    return conv2d_general(input, kernel, bias, stride, stride, padding, padding);
}

Tensor conv1d(const Tensor& input, const Tensor& kernel, const Tensor& bias, std::size_t stride,
              std::size_t padding) {
    if (input.rank() != 3 || kernel.rank() != 3)
        throw ShapeError("conv1d expects rank-3 input and kernel, got " +
                         shape_str(input.shape()) + " and " + shape_str(kernel.shape()));
    const Shape& in = input.shape();
    const Shape& k = kernel.shape();
    Tensor out = conv2d_general(reshape(input, {in[0], in[1], 1, in[2]}),
                                reshape(kernel, {k[0], k[1], 1, k[2]}), bias, 1, stride, 0, padding);
    const Shape& o = out.shape();
    return reshape(out, {o[0], o[1], o[3]});
}

Tensor softmax(const Tensor& a, std::size_t axis) {
    const AxisSplit s = split_at(a.shape(), axis);
    auto av = a.data();
    std::vector<double> out(av.size());
    for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t i = 0; i < s.inner; ++i) {
            const std::size_t base = o * s.extent * s.inner + i;
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t e = 0; e < s.extent; ++e) mx = std::max(mx, av[base + e * s.inner]);
            double total = 0.0;
            for (std::size_t e = 0; e < s.extent; ++e) {
                const double v = std::exp(av[base + e * s.inner] - mx);
                out[base + e * s.inner] = v;
                total += v;
            }
            for (std::size_t e = 0; e < s.extent; ++e) out[base + e * s.inner] /= total;
        }
    std::vector<double> y = out;
    return Tensor::make_result(a.shape(), std::move(out), {a}, "softmax",
                               [a, s, y = std::move(y)](std::span<const double> g) {
                                   std::vector<double> ga(y.size());
                                   for (std::size_t o = 0; o < s.outer; ++o)
                                       for (std::size_t i = 0; i < s.inner; ++i) {
                                           const std::size_t base = o * s.extent * s.inner + i;
                                           double dot = 0.0;
                                           for (std::size_t e = 0; e < s.extent; ++e)
                                               dot += g[base + e * s.inner] * y[base + e * s.inner];
                                           for (std::size_t e = 0; e < s.extent; ++e) {
                                               const std::size_t j = base + e * s.inner;
                                               ga[j] = y[j] * (g[j] - dot);
                                           }
                                       }
                                   Tensor::accumulate_grad(a, ga);
                               });
}

BatchNormState BatchNormState::fresh(std::size_t channels) {
    return BatchNormState{Tensor::zeros({channels}), Tensor::ones({channels})};
}

Tensor batchnorm(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                 BatchNormState& state, Mode mode) {
    if (input.rank() < 2) throw ShapeError("batchnorm expects N×C×..., got " + shape_str(input.shape()));
    const std::size_t n = input.dim(0);
    const std::size_t c = input.dim(1);
    const std::size_t spatial = input.numel() / (n * c);
    for (const Tensor* t : std::initializer_list<const Tensor*>{&gamma, &beta, &state.running_mean, &state.running_var})
        if (t->rank() != 1 || t->dim(0) != c)
            throw ShapeError("batchnorm parameter shape " + shape_str(t->shape()) +
                             " does not match " + std::to_string(c) + " channels");
    const std::size_t m = n * spatial;
    if (mode == Mode::train && m < 2)
        throw ShapeError("batchnorm in train mode needs more than one value per channel, got " +
                         shape_str(input.shape()));
    auto x = input.data();
    std::vector<double> mu(c, 0.0), invstd(c, 0.0);
    if (mode == Mode::train) {
        std::vector<double> var(c, 0.0);
        for (std::size_t ch = 0; ch < c; ++ch) {
            double acc = 0.0;
            for (std::size_t b = 0; b < n; ++b) {
                const double* p = x.data() + (b * c + ch) * spatial;
                for (std::size_t i = 0; i < spatial; ++i) acc += p[i];
            }
            mu[ch] = acc / static_cast<double>(m);
            double sq = 0.0;
            for (std::size_t b = 0; b < n; ++b) {
                const double* p = x.data() + (b * c + ch) * spatial;
                for (std::size_t i = 0; i < spatial; ++i) sq += (p[i] - mu[ch]) * (p[i] - mu[ch]);
            }
            var[ch] = sq / static_cast<double>(m);
            invstd[ch] = 1.0 / std::sqrt(var[ch] + state.eps);
        }
        auto rm = state.running_mean.mutable_data();
        auto rv = state.running_var.mutable_data();
        const double unbias = static_cast<double>(m) / static_cast<double>(m - 1);
        for (std::size_t ch = 0; ch < c; ++ch) {
            rm[ch] = (1.0 - state.momentum) * rm[ch] + state.momentum * mu[ch];
            rv[ch] = (1.0 - state.momentum) * rv[ch] + state.momentum * var[ch] * unbias;
        }
    } else {
        auto rm = state.running_mean.data();
        auto rv = state.running_var.data();
        for (std::size_t ch = 0; ch < c; ++ch) {
            mu[ch] = rm[ch];
            invstd[ch] = 1.0 / std::sqrt(rv[ch] + state.eps);
        }
    }
    auto gv = gamma.data();
    auto bv = beta.data();
    std::vector<double> xhat(x.size()), out(x.size());
    for (std::size_t b = 0; b < n; ++b)
        for (std::size_t ch = 0; ch < c; ++ch) {
            const std::size_t off = (b * c + ch) * spatial;
            for (std::size_t i = 0; i < spatial; ++i) {
                xhat[off + i] = (x[off + i] - mu[ch]) * invstd[ch];
                out[off + i] = gv[ch] * xhat[off + i] + bv[ch];
            }
        }
    return Tensor::make_result(
        input.shape(), std::move(out), {input, gamma, beta}, "batchnorm",
        [input, gamma, beta, mode, n, c, spatial, m, invstd = std::move(invstd),
         xhat = std::move(xhat)](std::span<const double> g) {
            auto gv = gamma.data();
            std::vector<double> dgamma(c, 0.0), dbeta(c, 0.0);
            for (std::size_t b = 0; b < n; ++b)
                for (std::size_t ch = 0; ch < c; ++ch) {
                    const std::size_t off = (b * c + ch) * spatial;
                    for (std::size_t i = 0; i < spatial; ++i) {
                        dgamma[ch] += g[off + i] * xhat[off + i];
                        dbeta[ch] += g[off + i];
                    }
                }
            if (input.requires_grad()) {
                std::vector<double> gx(g.size());
                const double inv_m = 1.0 / static_cast<double>(m);
                for (std::size_t b = 0; b < n; ++b)
                    for (std::size_t ch = 0; ch < c; ++ch) {
                        const std::size_t off = (b * c + ch) * spatial;
                        for (std::size_t i = 0; i < spatial; ++i) {
                            if (mode == Mode::train) {
                                // dxhat = g·γ; sums of dxhat and dxhat·xhat are γ·dbeta, γ·dgamma
                                gx[off + i] = gv[ch] * invstd[ch] * inv_m *
                                              (static_cast<double>(m) * g[off + i] - dbeta[ch] -
                                               xhat[off + i] * dgamma[ch]);
                            } else {
                                gx[off + i] = g[off + i] * gv[ch] * invstd[ch];
                            }
                        }
                    }
                Tensor::accumulate_grad(input, gx);
            }
            Tensor::accumulate_grad(gamma, dgamma);
            Tensor::accumulate_grad(beta, dbeta);
        });
}

Tensor adaptive_avg_pool2d(const Tensor& input, std::size_t out_h, std::size_t out_w) {
    if (input.rank() != 4) throw ShapeError("adaptive_avg_pool2d expects N×C×H×W, got " + shape_str(input.shape()));
    const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
    if (out_h == 0 || out_w == 0 || out_h > h || out_w > w)
        throw ShapeError("invalid pooling target " + std::to_string(out_h) + "x" +
                         std::to_string(out_w) + " for input " + shape_str(input.shape()));
    auto lo = [](std::size_t i, std::size_t in, std::size_t out) { return (i * in) / out; };
    auto hi = [](std::size_t i, std::size_t in, std::size_t out) { return ((i + 1) * in + out - 1) / out; };
    auto x = input.data();
    std::vector<double> result(n * c * out_h * out_w);
    for (std::size_t plane = 0; plane < n * c; ++plane)
        for (std::size_t i = 0; i < out_h; ++i)
            for (std::size_t j = 0; j < out_w; ++j) {
                const std::size_t y0 = lo(i, h, out_h), y1 = hi(i, h, out_h);
                const std::size_t x0 = lo(j, w, out_w), x1 = hi(j, w, out_w);
                double acc = 0.0;
                for (std::size_t y = y0; y < y1; ++y)
                    for (std::size_t xx = x0; xx < x1; ++xx) acc += x[plane * h * w + y * w + xx];
                result[(plane * out_h + i) * out_w + j] = acc / static_cast<double>((y1 - y0) * (x1 - x0));
            }
    return Tensor::make_result(
        Shape{n, c, out_h, out_w}, std::move(result), {input}, "adaptive_avg_pool2d",
        [input, n, c, h, w, out_h, out_w, lo, hi](std::span<const double> g) {
            std::vector<double> gx(input.numel(), 0.0);
            for (std::size_t plane = 0; plane < n * c; ++plane)
                for (std::size_t i = 0; i < out_h; ++i)
                    for (std::size_t j = 0; j < out_w; ++j) {
                        const std::size_t y0 = lo(i, h, out_h), y1 = hi(i, h, out_h);
                        const std::size_t x0 = lo(j, w, out_w), x1 = hi(j, w, out_w);
                        const double share = g[(plane * out_h + i) * out_w + j] /
                                             static_cast<double>((y1 - y0) * (x1 - x0));
                        for (std::size_t y = y0; y < y1; ++y)
                            for (std::size_t xx = x0; xx < x1; ++xx) gx[plane * h * w + y * w + xx] += share;
                    }
            Tensor::accumulate_grad(input, gx);
        });
}

Tensor l2_normalize(const Tensor& v, std::size_t axis) {
    const AxisSplit s = split_at(v.shape(), axis);
    auto x = v.data();
    std::vector<double> out(x.size());
    std::vector<double> denom(s.outer * s.inner);
    for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t i = 0; i < s.inner; ++i) {
            const std::size_t base = o * s.extent * s.inner + i;
            double sq = 0.0;
            for (std::size_t e = 0; e < s.extent; ++e) sq += x[base + e * s.inner] * x[base + e * s.inner];
            const double d = std::max(std::sqrt(sq), kNormFloor);
            denom[o * s.inner + i] = d;
            for (std::size_t e = 0; e < s.extent; ++e) out[base + e * s.inner] = x[base + e * s.inner] / d;
        }
    std::vector<double> y = out;
    return Tensor::make_result(
        v.shape(), std::move(out), {v}, "l2_normalize",
        [v, s, y = std::move(y), denom = std::move(denom)](std::span<const double> g) {
            std::vector<double> gx(y.size());
            for (std::size_t o = 0; o < s.outer; ++o)
                for (std::size_t i = 0; i < s.inner; ++i) {
                    const std::size_t base = o * s.extent * s.inner + i;
                    const double d = denom[o * s.inner + i];
                    const bool floored = d <= kNormFloor;
                    double dot = 0.0;
                    if (!floored)
                        for (std::size_t e = 0; e < s.extent; ++e)
                            dot += y[base + e * s.inner] * g[base + e * s.inner];
                    for (std::size_t e = 0; e < s.extent; ++e) {
                        const std::size_t j = base + e * s.inner;
                        gx[j] = (g[j] - y[j] * dot) / d;
                    }
                }
            Tensor::accumulate_grad(v, gx);
        });
}

Tensor reshape(const Tensor& a, Shape shape) {
    if (shape_numel(shape) != a.numel())
        throw ShapeError("cannot reshape " + shape_str(a.shape()) + " to " + shape_str(shape));
    std::vector<double> out(a.data().begin(), a.data().end());
    return Tensor::make_result(std::move(shape), std::move(out), {a}, "reshape",
                               [a](std::span<const double> g) { Tensor::accumulate_grad(a, g); });
}

Tensor index_select(const Tensor& a, const std::vector<std::size_t>& indices) {
    if (a.rank() == 0) throw ShapeError("index_select on a scalar");
    if (indices.empty()) throw ShapeError("index_select with no indices");
    const std::size_t rows = a.dim(0);
    const std::size_t row = a.numel() / rows;
    auto av = a.data();
    std::vector<double> out(indices.size() * row);
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] >= rows)
            throw ShapeError("row index " + std::to_string(indices[i]) + " out of range for " +
                             shape_str(a.shape()));
        std::copy_n(av.begin() + static_cast<std::ptrdiff_t>(indices[i] * row), row,
                    out.begin() + static_cast<std::ptrdiff_t>(i * row));
    }
    Shape shape = a.shape();
    shape[0] = indices.size();
    return Tensor::make_result(std::move(shape), std::move(out), {a}, "index_select",
                               [a, indices, row](std::span<const double> g) {
                                   std::vector<double> ga(a.numel(), 0.0);
                                   for (std::size_t i = 0; i < indices.size(); ++i)
                                       for (std::size_t j = 0; j < row; ++j)
                                           ga[indices[i] * row + j] += g[i * row + j];
                                   Tensor::accumulate_grad(a, ga);
                               });
}

Tensor take(const Tensor& a, const std::vector<std::size_t>& indices) {
    if (indices.empty()) throw ShapeError("take with no indices");
    auto av = a.data();
    std::vector<double> out(indices.size());
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] >= av.size())
            throw ShapeError("flat index " + std::to_string(indices[i]) + " out of range for " +
                             shape_str(a.shape()));
        out[i] = av[indices[i]];
    }
    return Tensor::make_result(Shape{indices.size()}, std::move(out), {a}, "take",
                               [a, indices](std::span<const double> g) {
                                   std::vector<double> ga(a.numel(), 0.0);
                                   for (std::size_t i = 0; i < indices.size(); ++i) ga[indices[i]] += g[i];
                                   Tensor::accumulate_grad(a, ga);
                               });
}

Tensor concat(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ShapeError("concat of zero tensors");
    if (parts.size() == 1) return parts.front();
    Shape shape = parts.front().shape();
    if (shape.empty()) throw ShapeError("concat of scalars");
    std::vector<double> out;
    std::size_t rows = 0;
    for (const auto& p : parts) {
        if (p.rank() != shape.size() ||
            !std::equal(shape.begin() + 1, shape.end(), p.shape().begin() + 1))
            throw ShapeError("concat shape mismatch: " + shape_str(shape) + " vs " + shape_str(p.shape()));
        rows += p.dim(0);
        out.insert(out.end(), p.data().begin(), p.data().end());
    }
    shape[0] = rows;
    std::vector<std::size_t> sizes;
    for (const auto& p : parts) sizes.push_back(p.numel());
    return Tensor::make_result(std::move(shape), std::move(out), parts, "concat",
                               [parts, sizes](std::span<const double> g) {
                                   std::size_t off = 0;
                                   for (std::size_t i = 0; i < parts.size(); ++i) {
                                       Tensor::accumulate_grad(parts[i], g.subspan(off, sizes[i]));
                                       off += sizes[i];
                                   }
                               });
}

Tensor slice(const Tensor& a, std::size_t begin, std::size_t end) {
    if (a.rank() == 0 || begin >= end || end > a.dim(0))
        throw ShapeError("invalid slice [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") of " + shape_str(a.shape()));
    const std::size_t row = a.numel() / a.dim(0);
    std::vector<double> out(a.data().begin() + static_cast<std::ptrdiff_t>(begin * row),
                            a.data().begin() + static_cast<std::ptrdiff_t>(end * row));
    Shape shape = a.shape();
    shape[0] = end - begin;
    return Tensor::make_result(std::move(shape), std::move(out), {a}, "slice",
                               [a, begin, row](std::span<const double> g) {
                                   std::vector<double> ga(a.numel(), 0.0);
                                   std::copy(g.begin(), g.end(), ga.begin() + static_cast<std::ptrdiff_t>(begin * row));
                                   Tensor::accumulate_grad(a, ga);
                               });
}

}  // namespace fsr
