#include "posekit/ssim.hpp"

#include "posekit/error.hpp"

#include <vector>

namespace posekit {

namespace {

void require_same_shape(const image& x, const image& y, const char* who) {
    if (!x.same_shape(y)) {
        throw error(error_code::shape, std::string(who) + ": patch shapes differ");
    }
}

void require_window(const image& x, const ssim_config& cfg, const char* who) {
    if (cfg.window < 1 || x.width() < cfg.window || x.height() < cfg.window) {
        throw error(error_code::shape, std::string(who) + ": patch smaller than the window");
    }
}

// Summed-area table with a zero row and column in front.
class integral {
public:
    integral(int width, int height) : stride_(width + 1), sums_((width + 1) * (height + 1), 0.0) {}

    template <typename F>
    void build(int width, int height, F&& value) {
        for (int y = 0; y < height; ++y) {
            double row = 0.0;
            for (int x = 0; x < width; ++x) {
                row += value(x, y);
                sums_[(y + 1) * stride_ + x + 1] = sums_[y * stride_ + x + 1] + row;
            }
        }
    }

    double box(int x, int y, int w, int h) const {
        return sums_[(y + h) * stride_ + x + w] - sums_[y * stride_ + x + w] -
               sums_[(y + h) * stride_ + x] + sums_[y * stride_ + x];
    }

private:
    int stride_;
    std::vector<double> sums_;
};

double channel_mean(const image& img, int c) {
    double sum = 0.0;
    for (int y = 0; y < img.height(); ++y) {
        for (int x = 0; x < img.width(); ++x) {
            sum += img.at(x, y, c);
        }
    }
    return sum / (double(img.width()) * img.height());
}

// Per-pixel planes of one channel. Intensities are shifted by a per-patch offset before
// accumulation so the window moments do not cancel catastrophically; moments are shift-invariant.
struct channel_planes {
    int width = 0;
    int height = 0;
    double offset_x = 0.0;
    double offset_y = 0.0;
    std::vector<double> x;
    std::vector<double> y;
    std::vector<double> dy_dx;
    std::vector<double> dy_dy;
};

struct window_terms {
    double value;
    double d_value_dx;
    double d_value_dy;
};

// Mean windowed SSIM of one channel; with_grad also differentiates through the y-plane
// derivatives.
window_terms windowed_channel(const channel_planes& p, const ssim_config& cfg, bool with_grad) {
    const int w = p.width;
    const int h = p.height;
    const int win = cfg.window;
    const double n = double(win) * win;
    const double c1 = cfg.c1();
    const double c2 = cfg.c2();
    auto idx = [w](int x, int y) { return static_cast<std::size_t>(y) * w + x; };

    integral sx(w, h), sy(w, h), sxx(w, h), syy(w, h), sxy(w, h);
    sx.build(w, h, [&](int x, int y) { return p.x[idx(x, y)]; });
    sy.build(w, h, [&](int x, int y) { return p.y[idx(x, y)]; });
    sxx.build(w, h, [&](int x, int y) { return p.x[idx(x, y)] * p.x[idx(x, y)]; });
    syy.build(w, h, [&](int x, int y) { return p.y[idx(x, y)] * p.y[idx(x, y)]; });
    sxy.build(w, h, [&](int x, int y) { return p.x[idx(x, y)] * p.y[idx(x, y)]; });

    integral gx(w, h), gy(w, h), ygx(w, h), ygy(w, h), xgx(w, h), xgy(w, h);
    if (with_grad) {
        gx.build(w, h, [&](int x, int y) { return p.dy_dx[idx(x, y)]; });
        gy.build(w, h, [&](int x, int y) { return p.dy_dy[idx(x, y)]; });
        ygx.build(w, h, [&](int x, int y) { return p.y[idx(x, y)] * p.dy_dx[idx(x, y)]; });
        ygy.build(w, h, [&](int x, int y) { return p.y[idx(x, y)] * p.dy_dy[idx(x, y)]; });
        xgx.build(w, h, [&](int x, int y) { return p.x[idx(x, y)] * p.dy_dx[idx(x, y)]; });
        xgy.build(w, h, [&](int x, int y) { return p.x[idx(x, y)] * p.dy_dy[idx(x, y)]; });
    }

    window_terms total{0.0, 0.0, 0.0};
    const int nx = w - win + 1;
    const int ny = h - win + 1;
    for (int wy = 0; wy < ny; ++wy) {
        for (int wx = 0; wx < nx; ++wx) {
            const double mx = sx.box(wx, wy, win, win) / n;
            const double my = sy.box(wx, wy, win, win) / n;
            const double vx = sxx.box(wx, wy, win, win) / n - mx * mx;
            const double vy = syy.box(wx, wy, win, win) / n - my * my;
            const double cxy = sxy.box(wx, wy, win, win) / n - mx * my;
            const double mux = mx + p.offset_x;
            const double muy = my + p.offset_y;

            const double lum_num = 2.0 * mux * muy + c1;
            const double lum_den = mux * mux + muy * muy + c1;
            const double cs_num = 2.0 * cxy + c2;
            const double cs_den = vx + vy + c2;
            const double lum = lum_num / lum_den;
            const double cs = cs_num / cs_den;
            total.value += lum * cs;

            if (with_grad) {
                const double dlum_dmu = (2.0 * mux * lum_den - lum_num * 2.0 * muy) / (lum_den * lum_den);
                const double dcs_dcov = 2.0 / cs_den;
                const double dcs_dvar = -cs_num / (cs_den * cs_den);
                const auto directional = [&](const integral& g, const integral& yg, const integral& xg) {
                    const double dmu = g.box(wx, wy, win, win) / n;
                    const double dvar = 2.0 * (yg.box(wx, wy, win, win) / n - my * dmu);
                    const double dcov = xg.box(wx, wy, win, win) / n - mx * dmu;
                    return dlum_dmu * dmu * cs + lum * (dcs_dcov * dcov + dcs_dvar * dvar);
                };
                total.d_value_dx += directional(gx, ygx, xgx);
                total.d_value_dy += directional(gy, ygy, xgy);
            }
        }
    }
    const double windows = double(nx) * ny;
    total.value /= windows;
    total.d_value_dx /= windows;
    total.d_value_dy /= windows;
    return total;
}

channel_planes planes_from(const image& x, const image& y, int c) {
    channel_planes p;
    p.width = x.width();
    p.height = x.height();
    p.offset_x = channel_mean(x, c);
    p.offset_y = channel_mean(y, c);
    const std::size_t count = static_cast<std::size_t>(p.width) * p.height;
    p.x.resize(count);
    p.y.resize(count);
    for (int j = 0; j < p.height; ++j) {
        for (int i = 0; i < p.width; ++i) {
            p.x[j * p.width + i] = x.at(i, j, c) - p.offset_x;
            p.y[j * p.width + i] = y.at(i, j, c) - p.offset_y;
        }
    }
    return p;
}

}  // namespace

ssim_stats patch_stats(const image& x, const image& y, int channel) {
    require_same_shape(x, y, "patch_stats");
    ssim_stats s;
    s.mu_x = channel_mean(x, channel);
    s.mu_y = channel_mean(y, channel);
    const double n = double(x.width()) * x.height();
    for (int j = 0; j < x.height(); ++j) {
        for (int i = 0; i < x.width(); ++i) {
            const double dx = x.at(i, j, channel) - s.mu_x;
            const double dy = y.at(i, j, channel) - s.mu_y;
            s.var_x += dx * dx;
            s.var_y += dy * dy;
            s.cov_xy += dx * dy;
        }
    }
    s.var_x /= n;
    s.var_y /= n;
    s.cov_xy /= n;
    return s;
}

double ssim_from_stats(const ssim_stats& s, const ssim_config& cfg) {
    const double c1 = cfg.c1();
    const double c2 = cfg.c2();
    return (2.0 * s.mu_x * s.mu_y + c1) / (s.mu_x * s.mu_x + s.mu_y * s.mu_y + c1) *
           (2.0 * s.cov_xy + c2) / (s.var_x + s.var_y + c2);
}

double ssim_window(const image& x, const image& y, const ssim_config& cfg) {
    require_same_shape(x, y, "ssim_window");
    double sum = 0.0;
    for (int c = 0; c < x.channels(); ++c) {
        sum += ssim_from_stats(patch_stats(x, y, c), cfg);
    }
    return sum / x.channels();
}

double ssim_map(const image& x, const image& y, const ssim_config& cfg) {
    require_same_shape(x, y, "ssim_map");
    require_window(x, cfg, "ssim_map");
    if (x.width() == cfg.window && x.height() == cfg.window) return ssim_window(x, y, cfg);
    double sum = 0.0;
    for (int c = 0; c < x.channels(); ++c) {
        sum += windowed_channel(planes_from(x, y, c), cfg, false).value;
    }
    return sum / x.channels();
}

bool patch_fits(const image& img, const Eigen::Vector2d& center, int width, int height) {
    const double left = center.x() - (width - 1) / 2.0;
    const double top = center.y() - (height - 1) / 2.0;
    return contains(img, left, top) && contains(img, left + width - 1, top + height - 1);
}

image patch_at(const image& img, const Eigen::Vector2d& center, int width, int height) {
    if (!patch_fits(img, center, width, height)) {
        throw error(error_code::out_of_bounds, "patch_at: window exits the image");
    }
    const double left = center.x() - (width - 1) / 2.0;
    const double top = center.y() - (height - 1) / 2.0;
    image out(width, height, img.channels());
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            for (int c = 0; c < img.channels(); ++c) {
                out.at(x, y, c) = sample_value(img, left + x, top + y, c);
            }
        }
    }
    return out;
}

ssim_value_grad ssim_map_with_grad(const image& ref, const image& img, const Eigen::Vector2d& center,
                                   const ssim_config& cfg) {
    require_window(ref, cfg, "ssim_grad");
    if (ref.channels() != img.channels()) {
        throw error(error_code::shape, "ssim_grad: channel counts differ");
    }
    const int w = ref.width();
    const int h = ref.height();
    if (!patch_fits(img, center, w, h)) {
        throw error(error_code::out_of_bounds, "ssim_grad: window exits the image");
    }
    const double left = center.x() - (w - 1) / 2.0;
    const double top = center.y() - (h - 1) / 2.0;
    const std::size_t count = static_cast<std::size_t>(w) * h;

    ssim_value_grad out{0.0, Eigen::Vector2d::Zero()};
    for (int c = 0; c < ref.channels(); ++c) {
        channel_planes p;
        p.width = w;
        p.height = h;
        p.x.resize(count);
        p.y.resize(count);
        p.dy_dx.resize(count);
        p.dy_dy.resize(count);
        p.offset_x = channel_mean(ref, c);
        double y_sum = 0.0;
        for (int j = 0; j < h; ++j) {
            for (int i = 0; i < w; ++i) {
                const auto s = sample(img, left + i, top + j, c);
                const std::size_t k = static_cast<std::size_t>(j) * w + i;
                p.x[k] = ref.at(i, j, c) - p.offset_x;
                p.y[k] = s.value;
                p.dy_dx[k] = s.d_dx;
                p.dy_dy[k] = s.d_dy;
                y_sum += s.value;
            }
        }
        p.offset_y = y_sum / double(count);
        for (auto& v : p.y) {
            v -= p.offset_y;
        }
        const auto t = windowed_channel(p, cfg, true);
        out.value += t.value;
        out.grad += Eigen::Vector2d(t.d_value_dx, t.d_value_dy);
    }
    out.value /= ref.channels();
    out.grad /= ref.channels();
    return out;
}

Eigen::Vector2d ssim_grad(const image& ref, const image& img, const Eigen::Vector2d& center,
                          const ssim_config& cfg) {
    return ssim_map_with_grad(ref, img, center, cfg).grad;
}

}  // namespace posekit
