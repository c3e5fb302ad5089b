#include <algorithm>

#include "flame/error.hpp"
#include "models.hpp"

namespace flame::learner::detail {

namespace {

// Activations are stored [channel][time][width], width = 2.
constexpr std::size_t kWidth = 2;

void conv_forward(const double* x, std::size_t cin, std::size_t len, const double* w, const double* b,
                  std::size_t cout, std::size_t kernel, double* y) {
    const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(kernel / 2);
    const std::size_t plane = len * kWidth;
    for (std::size_t o = 0; o < cout; ++o) {
        double* yo = y + o * plane;
        std::fill(yo, yo + plane, b[o]);
        for (std::size_t i = 0; i < cin; ++i) {
            const double* xi = x + i * plane;
            for (std::size_t k = 0; k < kernel; ++k) {
                const double wk = w[(o * cin + i) * kernel + k];
                const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(k) - pad;
                const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, -shift);
                const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(len),
                                                                   static_cast<std::ptrdiff_t>(len) - shift);
                const double* src = xi + shift * static_cast<std::ptrdiff_t>(kWidth);
                for (std::ptrdiff_t idx = lo * 2; idx < hi * 2; ++idx) {
                    yo[idx] += wk * src[idx];
                }
            }
        }
    }
}

// Accumulates dw, db and (when dx != nullptr) dx from dy.
void conv_backward(const double* x, std::size_t cin, std::size_t len, const double* w, std::size_t cout,
                   std::size_t kernel, const double* dy, double* dw, double* db, double* dx) {
    const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(kernel / 2);
    const std::size_t plane = len * kWidth;
    for (std::size_t o = 0; o < cout; ++o) {
        const double* dyo = dy + o * plane;
        double bsum = 0.0;
        for (std::size_t idx = 0; idx < plane; ++idx) {
            bsum += dyo[idx];
        }
        db[o] += bsum;
        for (std::size_t i = 0; i < cin; ++i) {
            const double* xi = x + i * plane;
            double* dxi = dx ? dx + i * plane : nullptr;
            for (std::size_t k = 0; k < kernel; ++k) {
                const std::size_t widx = (o * cin + i) * kernel + k;
                const double wk = w[widx];
                const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(k) - pad;
                const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, -shift);
                const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(len),
                                                                   static_cast<std::ptrdiff_t>(len) - shift);
                const std::ptrdiff_t off = shift * static_cast<std::ptrdiff_t>(kWidth);
                double acc = 0.0;
                for (std::ptrdiff_t idx = lo * 2; idx < hi * 2; ++idx) {
                    acc += dyo[idx] * xi[idx + off];
                }
                dw[widx] += acc;
                if (dxi) {
                    for (std::ptrdiff_t idx = lo * 2; idx < hi * 2; ++idx) {
                        dxi[idx + off] += wk * dyo[idx];
                    }
                }
            }
        }
    }
}

struct ConvOffsets {
    std::size_t w = 0;
    std::size_t b = 0;
};

ConvOffsets conv_offsets(const ParamLayout& layout, const std::string& prefix) {
    return {layout.find(prefix + ".w").offset, layout.find(prefix + ".b").offset};
}

void relu(const std::vector<double>& in, std::vector<double>& out) {
    out.resize(in.size());
    for (std::size_t i = 0; i < in.size(); ++i) {
        out[i] = in[i] > 0.0 ? in[i] : 0.0;
    }
}

void block_forward(const double* x, std::size_t cin, std::size_t cout, std::size_t len, std::size_t kernel,
                   const ParamLayout& layout, const std::string& name, std::span<const double> w, BlockCache& bc) {
    const auto c1 = conv_offsets(layout, name + ".conv1");
    const auto c2 = conv_offsets(layout, name + ".conv2");
    const auto c3 = conv_offsets(layout, name + ".conv3");
    const std::size_t n = cout * len * kWidth;
    bc.a.resize(n);
    bc.p.resize(n);
    bc.s.resize(n);
    conv_forward(x, cin, len, w.data() + c1.w, w.data() + c1.b, cout, kernel, bc.a.data());
    conv_forward(bc.a.data(), cout, len, w.data() + c2.w, w.data() + c2.b, cout, kernel, bc.p.data());
    relu(bc.p, bc.q);
    conv_forward(bc.q.data(), cout, len, w.data() + c3.w, w.data() + c3.b, cout, kernel, bc.s.data());
    for (std::size_t i = 0; i < n; ++i) {
        bc.s[i] += bc.a[i];
    }
    relu(bc.s, bc.out);
}

void block_backward(const double* x, std::size_t cin, std::size_t cout, std::size_t len, std::size_t kernel,
                    const ParamLayout& layout, const std::string& name, std::span<const double> w,
                    const BlockCache& bc, const std::vector<double>& dout, std::span<double> grad, double* dx) {
    const auto c1 = conv_offsets(layout, name + ".conv1");
    const auto c2 = conv_offsets(layout, name + ".conv2");
    const auto c3 = conv_offsets(layout, name + ".conv3");
    const std::size_t n = cout * len * kWidth;
    std::vector<double> ds(n), dq(n, 0.0), da(n);
    for (std::size_t i = 0; i < n; ++i) {
        ds[i] = bc.s[i] > 0.0 ? dout[i] : 0.0;
        da[i] = ds[i];
    }
    conv_backward(bc.q.data(), cout, len, w.data() + c3.w, cout, kernel, ds.data(), grad.data() + c3.w,
                  grad.data() + c3.b, dq.data());
    for (std::size_t i = 0; i < n; ++i) {
        if (!(bc.p[i] > 0.0)) {
            dq[i] = 0.0;
        }
    }
    conv_backward(bc.a.data(), cout, len, w.data() + c2.w, cout, kernel, dq.data(), grad.data() + c2.w,
                  grad.data() + c2.b, da.data());
    conv_backward(x, cin, len, w.data() + c1.w, cout, kernel, da.data(), grad.data() + c1.w, grad.data() + c1.b,
                  dx);
}

void pool_forward(const std::vector<double>& x, std::size_t ch, std::size_t len, std::vector<double>& out,
                  std::vector<std::uint8_t>& arg) {
    const std::size_t half = len / 2;
    out.resize(ch * half * kWidth);
    arg.resize(out.size());
    for (std::size_t m = 0; m < ch; ++m) {
        for (std::size_t t = 0; t < half; ++t) {
            for (std::size_t c = 0; c < kWidth; ++c) {
                const double x0 = x[(m * len + 2 * t) * kWidth + c];
                const double x1 = x[(m * len + 2 * t + 1) * kWidth + c];
                const std::size_t o = (m * half + t) * kWidth + c;
                const bool second = x1 > x0;
                out[o] = second ? x1 : x0;
                arg[o] = second ? 1 : 0;
            }
        }
    }
}

void pool_backward(const std::vector<double>& dout, const std::vector<std::uint8_t>& arg, std::size_t ch,
                   std::size_t len, std::vector<double>& dx) {
    const std::size_t half = len / 2;
    dx.assign(ch * len * kWidth, 0.0);
    for (std::size_t m = 0; m < ch; ++m) {
        for (std::size_t t = 0; t < half; ++t) {
            for (std::size_t c = 0; c < kWidth; ++c) {
                const std::size_t o = (m * half + t) * kWidth + c;
                dx[(m * len + 2 * t + arg[o]) * kWidth + c] = dout[o];
            }
        }
    }
}

void add_conv(ParamLayout& layout, const std::string& name, std::size_t cin, std::size_t cout, std::size_t kernel) {
    layout.add(name + ".w", cout * cin * kernel);
    layout.add(name + ".b", cout, true);
}

}  // namespace

ResnetGeometry::ResnetGeometry(const ModelSpec& spec)
    : width(spec.input.width),
      kernel(spec.resnet.kernel),
      len0(spec.input.length),
      len1(spec.input.length / 2),
      len2(spec.input.length / 4),
      ch0(spec.input.channels),
      ch1(spec.resnet.block1),
      ch2(spec.resnet.block2),
      ch3(spec.resnet.trunk),
      hidden(spec.resnet.hidden),
      classes(spec.classes),
      flat(spec.resnet.trunk * (spec.input.length / 4) * spec.input.width) {}

void mini_resnet_layout(const ModelSpec& spec, ParamLayout& layout) {
    const ResnetGeometry g(spec);
    add_conv(layout, "b1.conv1", g.ch0, g.ch1, g.kernel);
    add_conv(layout, "b1.conv2", g.ch1, g.ch1, g.kernel);
    add_conv(layout, "b1.conv3", g.ch1, g.ch1, g.kernel);
    add_conv(layout, "b2.conv1", g.ch1, g.ch2, g.kernel);
    add_conv(layout, "b2.conv2", g.ch2, g.ch2, g.kernel);
    add_conv(layout, "b2.conv3", g.ch2, g.ch2, g.kernel);
    add_conv(layout, "trunk", g.ch2, g.ch3, g.kernel);
    layout.add("fc1.w", g.hidden * g.flat);
    layout.add("fc1.b", g.hidden, true);
    layout.add("fc2.w", g.classes * g.hidden);
    layout.add("fc2.b", g.classes, true);
}

void mini_resnet_forward(const ModelSpec& spec, const ParamLayout& layout, std::span<const double> w,
                         const modality::ModalInput& x, ResnetCache& cache, std::span<double> z) {
    const ResnetGeometry g(spec);
    cache.input = x.values.data();
    block_forward(cache.input, g.ch0, g.ch1, g.len0, g.kernel, layout, "b1", w, cache.b1);
    pool_forward(cache.b1.out, g.ch1, g.len0, cache.pool1, cache.arg1);
    block_forward(cache.pool1.data(), g.ch1, g.ch2, g.len1, g.kernel, layout, "b2", w, cache.b2);
    pool_forward(cache.b2.out, g.ch2, g.len1, cache.pool2, cache.arg2);

    const auto tc = conv_offsets(layout, "trunk");
    cache.z.resize(g.flat);
    conv_forward(cache.pool2.data(), g.ch2, g.len2, w.data() + tc.w, w.data() + tc.b, g.ch3, g.kernel,
                 cache.z.data());
    relu(cache.z, cache.h);

    const auto f1 = conv_offsets(layout, "fc1");
    cache.u.resize(g.hidden);
    for (std::size_t j = 0; j < g.hidden; ++j) {
        const double* row = w.data() + f1.w + j * g.flat;
        double acc = 0.0;
        for (std::size_t i = 0; i < g.flat; ++i) {
            acc += row[i] * cache.h[i];
        }
        cache.u[j] = acc + w[f1.b + j];
    }
    relu(cache.u, cache.v);

    const auto f2 = conv_offsets(layout, "fc2");
    for (std::size_t k = 0; k < g.classes; ++k) {
        const double* row = w.data() + f2.w + k * g.hidden;
        double acc = 0.0;
        for (std::size_t j = 0; j < g.hidden; ++j) {
            acc += row[j] * cache.v[j];
        }
        z[k] = acc + w[f2.b + k];
    }
}

void mini_resnet_backward(const ModelSpec& spec, const ParamLayout& layout, std::span<const double> w,
                          const ResnetCache& cache, std::span<const double> dz, std::span<double> grad) {
    const ResnetGeometry g(spec);

    const auto f2 = conv_offsets(layout, "fc2");
    std::vector<double> dv(g.hidden, 0.0);
    for (std::size_t k = 0; k < g.classes; ++k) {
        const double* row = w.data() + f2.w + k * g.hidden;
        double* grow = grad.data() + f2.w + k * g.hidden;
        for (std::size_t j = 0; j < g.hidden; ++j) {
            grow[j] += dz[k] * cache.v[j];
            dv[j] += row[j] * dz[k];
        }
        grad[f2.b + k] += dz[k];
    }

    const auto f1 = conv_offsets(layout, "fc1");
    std::vector<double> dh(g.flat, 0.0);
    for (std::size_t j = 0; j < g.hidden; ++j) {
        const double du = cache.u[j] > 0.0 ? dv[j] : 0.0;
        if (du == 0.0) {
            continue;
        }
        const double* row = w.data() + f1.w + j * g.flat;
        double* grow = grad.data() + f1.w + j * g.flat;
        for (std::size_t i = 0; i < g.flat; ++i) {
            grow[i] += du * cache.h[i];
            dh[i] += row[i] * du;
        }
        grad[f1.b + j] += du;
    }

    for (std::size_t i = 0; i < g.flat; ++i) {
        if (!(cache.z[i] > 0.0)) {
            dh[i] = 0.0;
        }
    }
    const auto tc = conv_offsets(layout, "trunk");
    std::vector<double> dpool2(g.ch2 * g.len2 * kWidth, 0.0);
    conv_backward(cache.pool2.data(), g.ch2, g.len2, w.data() + tc.w, g.ch3, g.kernel, dh.data(),
                  grad.data() + tc.w, grad.data() + tc.b, dpool2.data());

    std::vector<double> dout2;
    pool_backward(dpool2, cache.arg2, g.ch2, g.len1, dout2);
    std::vector<double> dpool1(g.ch1 * g.len1 * kWidth, 0.0);
    block_backward(cache.pool1.data(), g.ch1, g.ch2, g.len1, g.kernel, layout, "b2", w, cache.b2, dout2, grad,
                   dpool1.data());

    std::vector<double> dout1;
    pool_backward(dpool1, cache.arg1, g.ch1, g.len0, dout1);
    block_backward(cache.input, g.ch0, g.ch1, g.len0, g.kernel, layout, "b1", w, cache.b1, dout1, grad, nullptr);
}

void mini_resnet_signature(const ResnetCache& cache, std::vector<std::uint8_t>& out) {
    auto bits = [&out](const std::vector<double>& v) {
        for (double x : v) out.push_back(x > 0.0 ? 1 : 0);
    };
    bits(cache.b1.p);
    bits(cache.b1.s);
    bits(cache.b2.p);
    bits(cache.b2.s);
    bits(cache.z);
    bits(cache.u);
    out.insert(out.end(), cache.arg1.begin(), cache.arg1.end());
    out.insert(out.end(), cache.arg2.begin(), cache.arg2.end());
}

}  // namespace flame::learner::detail
