#include "enscal/neuralnet.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <utility>

#include "enscal/common.hpp"
#include "enscal/distributions.hpp"
#include "enscal/rng.hpp"

namespace enscal {
namespace {

constexpr double exp_clamp = 700.0;  // e^700 is finite; keeps forward total
constexpr double head_floor = 1e-6;  // raw outputs read as e^mu / e^sigma are floored here

double activate(Activation a, double z) {
    switch (a) {
        case Activation::linear: return z;
        case Activation::relu: return z > 0.0 ? z : 0.0;
        case Activation::elu: return z > 0.0 ? z : std::expm1(z);
        case Activation::exponential: return std::exp(std::min(z, exp_clamp));
    }
    throw config_error("unknown activation");
}

double activate_grad(Activation a, double z) {
    switch (a) {
        case Activation::linear: return 1.0;
        case Activation::relu: return z > 0.0 ? 1.0 : 0.0;
        case Activation::elu: return z > 0.0 ? 1.0 : std::exp(z);
        case Activation::exponential: return z < exp_clamp ? std::exp(z) : 0.0;
    }
    throw config_error("unknown activation");
}

// per-channel running statistics for an unfrozen normalization layer
struct NormAccum {
    double count = 0.0;
    std::vector<double> mean, m2;
};

void accumulate_norm(NormAccum& acc, const std::vector<double>& in, int n, Shape shape) {
    if (acc.mean.empty()) {
        acc.mean.assign(shape.channels, 0.0);
        acc.m2.assign(shape.channels, 0.0);
    }
    for (int i = 0; i < n; ++i)
        for (int t = 0; t < shape.length; ++t) {
            acc.count += 1.0;
            for (int c = 0; c < shape.channels; ++c) {
                const double x = in[(static_cast<std::size_t>(i) * shape.length + t) * shape.channels + c];
                const double delta = x - acc.mean[c];
                acc.mean[c] += delta / acc.count;
                acc.m2[c] += delta * (x - acc.mean[c]);
            }
        }
}

void norm_stats(const NormAccum& acc, std::vector<double>& mean, std::vector<double>& scale) {
    mean = acc.mean;
    scale.assign(acc.mean.size(), 1.0);
    if (acc.count < 1.0) {
        mean.assign(scale.size(), 0.0);
        return;
    }
    for (std::size_t c = 0; c < scale.size(); ++c) {
        const double var = acc.m2[c] / acc.count;
        scale[c] = var > 1e-12 ? std::sqrt(var) : 1.0;
    }
}

struct LayerCache {
    std::vector<double> input;            // layer input, n * in_shape.size()
    std::vector<double> pre;              // pre-activation, dense/conv only
    std::vector<int> winner;              // max-pool argmax (input time index)
    std::vector<double> mean, scale;      // normalization affine applied this pass
};

void layer_forward(const Layer& layer, const std::vector<double>& in, int n,
                   std::vector<double>& out, LayerCache* cache, NormAccum* accum) {
    const Shape is = layer.in_shape;
    const Shape os = layer.out_shape;
    out.assign(static_cast<std::size_t>(n) * os.size(), 0.0);
    if (cache) cache->input = in;

    switch (layer.spec.kind) {
        case LayerKind::dense: {
            const int width = is.channels;
            const int units = os.channels;
            if (cache) cache->pre.resize(static_cast<std::size_t>(n) * units);
            for (int i = 0; i < n; ++i) {
                const double* x = in.data() + static_cast<std::size_t>(i) * width;
                for (int u = 0; u < units; ++u) {
                    double z = layer.bias[u];
                    const double* w = layer.weights.data() + static_cast<std::size_t>(u) * width;
                    for (int j = 0; j < width; ++j) z += w[j] * x[j];
                    if (cache) cache->pre[static_cast<std::size_t>(i) * units + u] = z;
                    out[static_cast<std::size_t>(i) * units + u] = activate(layer.spec.activation, z);
                }
            }
            return;
        }
        case LayerKind::conv1d: {
            const int cin = is.channels;
            const int lout = os.length, nf = os.channels;
            const int kernel = layer.spec.kernel;
            if (cache) cache->pre.resize(static_cast<std::size_t>(n) * os.size());
            for (int i = 0; i < n; ++i) {
                const double* x = in.data() + static_cast<std::size_t>(i) * is.size();
                double* y = out.data() + static_cast<std::size_t>(i) * os.size();
                for (int t = 0; t < lout; ++t)
                    for (int f = 0; f < nf; ++f) {
                        double z = layer.bias[f];
                        const double* w = layer.weights.data() +
                                          static_cast<std::size_t>(f) * kernel * cin;
                        for (int k = 0; k < kernel; ++k)
                            for (int c = 0; c < cin; ++c)
                                z += w[k * cin + c] * x[(t + k) * cin + c];
                        if (cache)
                            cache->pre[(static_cast<std::size_t>(i) * lout + t) * nf + f] = z;
                        y[t * nf + f] = activate(layer.spec.activation, z);
                    }
            }
            return;
        }
        case LayerKind::pool1d: {
            const int p = layer.spec.pool_size;
            const int ch = is.channels;
            if (cache && layer.spec.pool_mode == PoolMode::max)
                cache->winner.resize(static_cast<std::size_t>(n) * os.size());
            for (int i = 0; i < n; ++i) {
                const double* x = in.data() + static_cast<std::size_t>(i) * is.size();
                double* y = out.data() + static_cast<std::size_t>(i) * os.size();
                for (int t = 0; t < os.length; ++t)
                    for (int c = 0; c < ch; ++c) {
                        if (layer.spec.pool_mode == PoolMode::max) {
                            int best = t * p;
                            double v = x[best * ch + c];
                            for (int k = 1; k < p; ++k)
                                if (x[(t * p + k) * ch + c] > v) {
                                    best = t * p + k;
                                    v = x[best * ch + c];
                                }
                            y[t * ch + c] = v;
                            if (cache)
                                cache->winner[(static_cast<std::size_t>(i) * os.length + t) * ch + c] = best;
                        } else {
                            double s = 0.0;
                            for (int k = 0; k < p; ++k) s += x[(t * p + k) * ch + c];
                            y[t * ch + c] = s / p;
                        }
                    }
            }
            return;
        }
        case LayerKind::flatten:
            out = in;  // same row-major buffer, reinterpreted shape
            return;
        case LayerKind::normalization: {
            const double* mean = layer.norm_mean.data();
            const double* scale = layer.norm_scale.data();
            std::vector<double> live_mean, live_scale;
            if (!layer.norm_frozen && accum) {
                accumulate_norm(*accum, in, n, is);
                norm_stats(*accum, live_mean, live_scale);
                mean = live_mean.data();
                scale = live_scale.data();
            }
            if (cache) {
                cache->mean.assign(mean, mean + is.channels);
                cache->scale.assign(scale, scale + is.channels);
            }
            for (int i = 0; i < n; ++i)
                for (int t = 0; t < is.length; ++t)
                    for (int c = 0; c < is.channels; ++c) {
                        const std::size_t idx =
                            (static_cast<std::size_t>(i) * is.length + t) * is.channels + c;
                        out[idx] = (in[idx] - mean[c]) / scale[c];
                    }
            return;
        }
    }
    throw config_error("unknown layer kind");
}

void layer_backward(const Layer& layer, const LayerCache& cache, int n,
                    const std::vector<double>& dout, std::vector<double>& din,
                    std::vector<double>& gw, std::vector<double>& gb) {
    const Shape is = layer.in_shape;
    const Shape os = layer.out_shape;
    din.assign(static_cast<std::size_t>(n) * is.size(), 0.0);
    gw.assign(layer.weights.size(), 0.0);
    gb.assign(layer.bias.size(), 0.0);

    switch (layer.spec.kind) {
        case LayerKind::dense: {
            const int width = is.channels;
            const int units = os.channels;
            for (int i = 0; i < n; ++i) {
                const double* x = cache.input.data() + static_cast<std::size_t>(i) * width;
                double* dx = din.data() + static_cast<std::size_t>(i) * width;
                for (int u = 0; u < units; ++u) {
                    const std::size_t oi = static_cast<std::size_t>(i) * units + u;
                    const double dz =
                        dout[oi] * activate_grad(layer.spec.activation, cache.pre[oi]);
                    if (dz == 0.0) continue;
                    gb[u] += dz;
                    double* gwr = gw.data() + static_cast<std::size_t>(u) * width;
                    const double* w = layer.weights.data() + static_cast<std::size_t>(u) * width;
                    for (int j = 0; j < width; ++j) {
                        gwr[j] += dz * x[j];
                        dx[j] += dz * w[j];
                    }
                }
            }
            return;
        }
        case LayerKind::conv1d: {
            const int cin = is.channels;
            const int lout = os.length, nf = os.channels;
            const int kernel = layer.spec.kernel;
            for (int i = 0; i < n; ++i) {
                const double* x = cache.input.data() + static_cast<std::size_t>(i) * is.size();
                double* dx = din.data() + static_cast<std::size_t>(i) * is.size();
                for (int t = 0; t < lout; ++t)
                    for (int f = 0; f < nf; ++f) {
                        const std::size_t oi = (static_cast<std::size_t>(i) * lout + t) * nf + f;
                        const double dz =
                            dout[oi] * activate_grad(layer.spec.activation, cache.pre[oi]);
                        if (dz == 0.0) continue;
                        gb[f] += dz;
                        double* gwr = gw.data() + static_cast<std::size_t>(f) * kernel * cin;
                        const double* w =
                            layer.weights.data() + static_cast<std::size_t>(f) * kernel * cin;
                        for (int k = 0; k < kernel; ++k)
                            for (int c = 0; c < cin; ++c) {
                                gwr[k * cin + c] += dz * x[(t + k) * cin + c];
                                dx[(t + k) * cin + c] += dz * w[k * cin + c];
                            }
                    }
            }
            return;
        }
        case LayerKind::pool1d: {
            const int p = layer.spec.pool_size;
            const int ch = is.channels;
            for (int i = 0; i < n; ++i) {
                const double* dy = dout.data() + static_cast<std::size_t>(i) * os.size();
                double* dx = din.data() + static_cast<std::size_t>(i) * is.size();
                for (int t = 0; t < os.length; ++t)
                    for (int c = 0; c < ch; ++c) {
                        if (layer.spec.pool_mode == PoolMode::max) {
                            const int win =
                                cache.winner[(static_cast<std::size_t>(i) * os.length + t) * ch + c];
                            dx[win * ch + c] += dy[t * ch + c];
                        } else {
                            for (int k = 0; k < p; ++k)
                                dx[(t * p + k) * ch + c] += dy[t * ch + c] / p;
                        }
                    }
            }
            return;
        }
        case LayerKind::flatten:
            din = dout;
            return;
        case LayerKind::normalization:
            for (int i = 0; i < n; ++i)
                for (int t = 0; t < is.length; ++t)
                    for (int c = 0; c < is.channels; ++c) {
                        const std::size_t idx =
                            (static_cast<std::size_t>(i) * is.length + t) * is.channels + c;
                        din[idx] = dout[idx] / cache.scale[c];
                    }
            return;
    }
    throw config_error("unknown layer kind");
}

struct HeadRead {
    double value = 0.0;
    double jac = 0.0;  // d(value)/d(raw output)
};

HeadRead read_log(double o) {
    if (o > head_floor) return {std::log(o), 1.0 / o};
    return {std::log(head_floor), 0.0};
}

HeadRead read_cube(double o) {
    const double mu = std::cbrt(o);
    return {mu, 1.0 / (3.0 * std::max(mu * mu, 1e-4))};
}

void require_finite_outputs(const Batch& outputs) {
    for (const double v : outputs.values)
        if (!std::isfinite(v))
            throw error("training aborted: non-finite network output");
}

}  // namespace

std::string activation_name(Activation a) {
    switch (a) {
        case Activation::linear: return "linear";
        case Activation::relu: return "relu";
        case Activation::elu: return "elu";
        case Activation::exponential: return "exponential";
    }
    throw config_error("unknown activation");
}

Activation activation_from_name(const std::string& name) {
    if (name == "linear") return Activation::linear;
    if (name == "relu") return Activation::relu;
    if (name == "elu") return Activation::elu;
    if (name == "exponential") return Activation::exponential;
    throw config_error("unknown activation '" + name + "'");
}

std::string head_name(HeadTransform h) {
    switch (h) {
        case HeadTransform::tn_exp_exp: return "tn_exp_exp";
        case HeadTransform::cn0_cube_exp: return "cn0_cube_exp";
        case HeadTransform::ln_moments: return "ln_moments";
        case HeadTransform::point: return "point";
    }
    throw config_error("unknown head");
}

HeadTransform head_from_name(const std::string& name) {
    if (name == "tn_exp_exp") return HeadTransform::tn_exp_exp;
    if (name == "cn0_cube_exp") return HeadTransform::cn0_cube_exp;
    if (name == "ln_moments") return HeadTransform::ln_moments;
    if (name == "point") return HeadTransform::point;
    throw config_error("unknown head '" + name + "'");
}

std::string loss_name(Loss l) {
    switch (l) {
        case Loss::mse: return "mse";
        case Loss::mae: return "mae";
        case Loss::crps_tn: return "crps_tn";
        case Loss::crps_cn0: return "crps_cn0";
        case Loss::crps_ln: return "crps_ln";
    }
    throw config_error("unknown loss");
}

Loss loss_from_name(const std::string& name) {
    if (name == "mse") return Loss::mse;
    if (name == "mae") return Loss::mae;
    if (name == "crps_tn") return Loss::crps_tn;
    if (name == "crps_cn0") return Loss::crps_cn0;
    if (name == "crps_ln") return Loss::crps_ln;
    throw config_error("unknown loss '" + name + "'");
}

Batch make_batch(Shape shape, const std::vector<std::vector<double>>& rows) {
    Batch b;
    b.count = static_cast<int>(rows.size());
    b.shape = shape;
    b.values.reserve(rows.size() * shape.size());
    for (const auto& row : rows) {
        if (static_cast<int>(row.size()) != shape.size())
            throw config_error("batch row width " + std::to_string(row.size()) +
                               " does not match shape size " + std::to_string(shape.size()));
        b.values.insert(b.values.end(), row.begin(), row.end());
    }
    return b;
}

LayerSpec LayerSpec::dense(int units, Activation a) {
    LayerSpec s;
    s.kind = LayerKind::dense;
    s.units = units;
    s.activation = a;
    return s;
}

LayerSpec LayerSpec::conv1d(int filters, int kernel, Activation a) {
    LayerSpec s;
    s.kind = LayerKind::conv1d;
    s.filters = filters;
    s.kernel = kernel;
    s.activation = a;
    return s;
}

LayerSpec LayerSpec::pool1d(PoolMode mode, int size) {
    LayerSpec s;
    s.kind = LayerKind::pool1d;
    s.pool_mode = mode;
    s.pool_size = size;
    return s;
}

LayerSpec LayerSpec::flatten() {
    LayerSpec s;
    s.kind = LayerKind::flatten;
    return s;
}

LayerSpec LayerSpec::normalization() {
    LayerSpec s;
    s.kind = LayerKind::normalization;
    return s;
}

Network build_network(const std::vector<LayerSpec>& specs, HeadTransform head, Shape input_shape,
                      std::uint64_t seed) {
    if (specs.empty()) throw config_error("network needs at least one layer");
    if (input_shape.length < 1 || input_shape.channels < 1)
        throw config_error("invalid input shape");

    Network net;
    net.input_shape = input_shape;
    net.head = head;
    Rng rng(seed);

    Shape shape = input_shape;
    for (const auto& spec : specs) {
        Layer layer;
        layer.spec = spec;
        layer.in_shape = shape;
        switch (spec.kind) {
            case LayerKind::dense: {
                if (!shape.flat())
                    throw config_error("dense layer needs a flat input; insert flatten");
                if (spec.units < 1) throw config_error("dense layer needs units >= 1");
                layer.out_shape = {1, spec.units};
                const int fan_in = shape.channels, fan_out = spec.units;
                const double a = std::sqrt(6.0 / (fan_in + fan_out));
                layer.weights.resize(static_cast<std::size_t>(fan_out) * fan_in);
                for (auto& w : layer.weights) w = rng.uniform(-a, a);
                layer.bias.assign(fan_out, 0.0);
                break;
            }
            case LayerKind::conv1d: {
                if (spec.filters < 1 || spec.kernel < 1)
                    throw config_error("conv1d needs filters >= 1 and kernel >= 1");
                if (shape.length < spec.kernel)
                    throw config_error("conv1d kernel " + std::to_string(spec.kernel) +
                                       " exceeds sequence length " + std::to_string(shape.length));
                layer.out_shape = {shape.length - spec.kernel + 1, spec.filters};
                const int fan_in = spec.kernel * shape.channels;
                const int fan_out = spec.kernel * spec.filters;
                const double a = std::sqrt(6.0 / (fan_in + fan_out));
                layer.weights.resize(static_cast<std::size_t>(spec.filters) * spec.kernel *
                                     shape.channels);
                for (auto& w : layer.weights) w = rng.uniform(-a, a);
                layer.bias.assign(spec.filters, 0.0);
                break;
            }
            case LayerKind::pool1d:
                if (spec.pool_size < 1) throw config_error("pool size must be >= 1");
                if (shape.length < spec.pool_size)
                    throw config_error("pool size exceeds sequence length");
                layer.out_shape = {(shape.length - spec.pool_size) / spec.pool_size + 1,
                                   shape.channels};
                break;
            case LayerKind::flatten:
                layer.out_shape = {1, shape.size()};
                break;
            case LayerKind::normalization:
                layer.out_shape = shape;
                layer.norm_mean.assign(shape.channels, 0.0);
                layer.norm_scale.assign(shape.channels, 1.0);
                break;
        }
        shape = layer.out_shape;
        net.layers.push_back(std::move(layer));
    }

    const int width = net.output_width();
    if (head != HeadTransform::point && width != 2)
        throw config_error("distribution heads need exactly 2 outputs, network has " +
                           std::to_string(width));

    // start the raw outputs inside the healthy region of the head reads:
    // e^mu/e^sigma reads get (1, 2) -> (0, ln 2); moment reads get (1, 1)
    auto& last = net.layers.back();
    if (head != HeadTransform::point) {
        if (last.spec.kind != LayerKind::dense)
            throw config_error("distribution heads need a dense output layer");
        last.bias[0] = 1.0;
        last.bias[1] = head == HeadTransform::ln_moments ? 1.0 : 2.0;
    }
    return net;
}

namespace {

std::vector<double> forward_impl(const Network& net, const Batch& input,
                                 std::vector<LayerCache>* caches,
                                 std::vector<NormAccum>* accums) {
    if (!(input.shape == net.input_shape))
        throw config_error("input batch shape does not match the network");
    std::vector<double> cur = input.values;
    std::vector<double> next;
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        layer_forward(net.layers[l], cur, input.count, next,
                      caches ? &(*caches)[l] : nullptr, accums ? &(*accums)[l] : nullptr);
        cur.swap(next);
    }
    return cur;
}

}  // namespace

Batch forward(const Network& net, const Batch& input) {
    Batch out;
    out.count = input.count;
    out.shape = net.output_shape();
    out.values = forward_impl(net, input, nullptr, nullptr);
    return out;
}

LossResult loss_and_grad(Loss loss, const Batch& outputs, const std::vector<double>& targets) {
    require_finite_outputs(outputs);
    const int n = outputs.count;
    const int w = outputs.shape.size();
    if (n < 1) throw config_error("loss needs a non-empty batch");
    for (const double t : targets)
        if (!std::isfinite(t)) throw error("training aborted: non-finite target");

    LossResult r;
    r.grad.assign(outputs.values.size(), 0.0);

    if (loss == Loss::mse || loss == Loss::mae) {
        if (targets.size() != outputs.values.size())
            throw config_error("point loss needs one target per output element");
        const double scale = 1.0 / (static_cast<double>(n) * w);
        for (std::size_t i = 0; i < outputs.values.size(); ++i) {
            const double e = outputs.values[i] - targets[i];
            if (loss == Loss::mse) {
                r.value += e * e * scale;
                r.grad[i] = 2.0 * e * scale;
            } else {
                r.value += std::abs(e) * scale;
                r.grad[i] = e > 0.0 ? scale : e < 0.0 ? -scale : 0.0;
            }
        }
        return r;
    }

    if (w != 2) throw config_error("crps losses need exactly 2 outputs per sample");
    if (targets.size() != static_cast<std::size_t>(n))
        throw config_error("crps losses need one target per sample");

    const double inv_n = 1.0 / n;
    for (int i = 0; i < n; ++i) {
        const double o1 = outputs.values[2 * i];
        const double o2 = outputs.values[2 * i + 1];
        const double y = targets[i];
        double value = 0.0, d1 = 0.0, d2 = 0.0;

        if (loss == Loss::crps_ln) {
            // moments read directly; infeasible moments get a penalty sloped
            // back toward the feasible region
            constexpr double m_floor = 1e-6, v_floor = 1e-10;
            if (o1 < m_floor || o2 < v_floor) {
                value = 1e6;
                if (o1 < m_floor) {
                    value += (o1 - m_floor) * (o1 - m_floor);
                    d1 = 2.0 * (o1 - m_floor);
                }
                if (o2 < v_floor) {
                    value += (o2 - v_floor) * (o2 - v_floor);
                    d2 = 2.0 * (o2 - v_floor);
                }
            } else {
                const Distribution dist = LogNormalMoments{o1, o2};
                value = crps(dist, y);
                const auto g = crps_grad(dist, y);
                d1 = g[0];
                d2 = g[1];
            }
        } else {
            const auto loc = loss == Loss::crps_tn ? read_log(o1) : read_cube(o1);
            const auto scl = read_log(o2);
            const auto dist_at = [&](double sigma) -> Distribution {
                if (loss == Loss::crps_tn) return TruncatedNormal{loc.value, sigma};
                return CensoredNormal{loc.value, sigma};
            };
            const Distribution dist = dist_at(scl.value);
            value = crps(dist, y);
            auto g = crps_grad(dist, y);
            // below the scale floor the clamped value is flat in sigma; use the
            // one-sided derivative at the floor so training can climb back out
            if (scl.value < min_scale) g[1] = crps_grad(dist_at(min_scale), y)[1];
            d1 = g[0] * loc.jac;
            d2 = g[1] * scl.jac;
        }

        r.value += value * inv_n;
        r.grad[2 * i] = d1 * inv_n;
        r.grad[2 * i + 1] = d2 * inv_n;
    }
    if (!std::isfinite(r.value)) throw error("training aborted: non-finite loss");
    return r;
}

Gradients compute_gradients(Network& net, const Batch& input, Loss loss,
                            const std::vector<double>& targets, bool update_norm_stats,
                            double& loss_value) {
    std::vector<LayerCache> caches(net.layers.size());
    std::vector<NormAccum> accums;
    std::vector<NormAccum>* accum_ptr = nullptr;
    if (update_norm_stats) {
        // persistent accumulators live in the trainer; this entry point exists
        // for single-shot use in tests, so fold stats straight into the layers
        accums.resize(net.layers.size());
        accum_ptr = &accums;
    }

    Batch out;
    out.count = input.count;
    out.shape = net.output_shape();
    out.values = forward_impl(net, input, &caches, accum_ptr);

    if (update_norm_stats)
        for (std::size_t l = 0; l < net.layers.size(); ++l)
            if (net.layers[l].spec.kind == LayerKind::normalization &&
                !net.layers[l].norm_frozen) {
                net.layers[l].norm_mean = caches[l].mean;
                net.layers[l].norm_scale = caches[l].scale;
            }

    const auto lr = loss_and_grad(loss, out, targets);
    loss_value = lr.value;

    Gradients g;
    g.weights.resize(net.layers.size());
    g.bias.resize(net.layers.size());
    std::vector<double> dcur = lr.grad;
    std::vector<double> dprev;
    for (std::size_t l = net.layers.size(); l-- > 0;) {
        layer_backward(net.layers[l], caches[l], input.count, dcur, dprev, g.weights[l],
                       g.bias[l]);
        dcur.swap(dprev);
    }
    return g;
}

double evaluate_loss(const Network& net, Loss loss, const Batch& input,
                     const std::vector<double>& targets) {
    Batch out = forward(net, input);
    return loss_and_grad(loss, out, targets).value;
}

namespace {

struct AdamState {
    std::vector<std::vector<double>> mw, vw, mb, vb;
    long t = 0;
};

void adam_step(Network& net, const Gradients& g, AdamState& st, double lr) {
    constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    ++st.t;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(st.t));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(st.t));
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        auto update = [&](std::vector<double>& p, const std::vector<double>& grad,
                          std::vector<double>& m, std::vector<double>& v) {
            for (std::size_t i = 0; i < p.size(); ++i) {
                m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
                p[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
            }
        };
        update(net.layers[l].weights, g.weights[l], st.mw[l], st.vw[l]);
        update(net.layers[l].bias, g.bias[l], st.mb[l], st.vb[l]);
    }
}

Batch gather_batch(const Batch& inputs, const std::vector<std::size_t>& idx, std::size_t lo,
                   std::size_t hi) {
    Batch b;
    b.shape = inputs.shape;
    b.count = static_cast<int>(hi - lo);
    const std::size_t width = inputs.shape.size();
    b.values.resize((hi - lo) * width);
    for (std::size_t k = lo; k < hi; ++k)
        std::memcpy(b.values.data() + (k - lo) * width,
                    inputs.values.data() + idx[k] * width, width * sizeof(double));
    return b;
}

std::vector<double> gather_targets(const std::vector<double>& targets, std::size_t width,
                                   const std::vector<std::size_t>& idx, std::size_t lo,
                                   std::size_t hi) {
    std::vector<double> t((hi - lo) * width);
    for (std::size_t k = lo; k < hi; ++k)
        std::memcpy(t.data() + (k - lo) * width, targets.data() + idx[k] * width,
                    width * sizeof(double));
    return t;
}

struct WeightSnapshot {
    std::vector<std::vector<double>> weights, bias, norm_mean, norm_scale;
    std::vector<bool> frozen;
};

WeightSnapshot snapshot(const Network& net) {
    WeightSnapshot s;
    for (const auto& l : net.layers) {
        s.weights.push_back(l.weights);
        s.bias.push_back(l.bias);
        s.norm_mean.push_back(l.norm_mean);
        s.norm_scale.push_back(l.norm_scale);
        s.frozen.push_back(l.norm_frozen);
    }
    return s;
}

void restore(Network& net, const WeightSnapshot& s) {
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        net.layers[l].weights = s.weights[l];
        net.layers[l].bias = s.bias[l];
        net.layers[l].norm_mean = s.norm_mean[l];
        net.layers[l].norm_scale = s.norm_scale[l];
        net.layers[l].norm_frozen = s.frozen[l];
    }
}

}  // namespace

TrainHistory train(Network& net, const Batch& inputs, const std::vector<double>& targets,
                   Loss loss, const TrainConfig& cfg) {
    const std::size_t n = static_cast<std::size_t>(inputs.count);
    if (n == 0) throw insufficient_data_error("cannot train on an empty dataset");
    const bool point_loss = loss == Loss::mse || loss == Loss::mae;
    const std::size_t target_width =
        point_loss ? static_cast<std::size_t>(net.output_width()) : 1;
    if (targets.size() != n * target_width)
        throw config_error("target array size does not match the dataset");
    if (cfg.batch_size < 1 || cfg.max_epochs < 1 || cfg.patience < 1 ||
        cfg.val_fraction < 0.0 || cfg.val_fraction >= 1.0)
        throw config_error("invalid training configuration");

    Rng rng(cfg.seed);
    const auto split = rng.permutation(n);
    const std::size_t n_val = static_cast<std::size_t>(cfg.val_fraction * static_cast<double>(n));
    const std::size_t n_train = n - n_val;
    if (n_train == 0) throw insufficient_data_error("validation split leaves no training data");
    std::vector<std::size_t> train_idx(split.begin(), split.begin() + n_train);
    const std::vector<std::size_t> val_idx(split.begin() + n_train, split.end());

    Batch val_inputs;
    std::vector<double> val_targets;
    if (n_val > 0) {
        val_inputs = gather_batch(inputs, val_idx, 0, n_val);
        val_targets = gather_targets(targets, target_width, val_idx, 0, n_val);
    }

    AdamState st;
    st.t = 0;
    for (const auto& l : net.layers) {
        st.mw.emplace_back(l.weights.size(), 0.0);
        st.vw.emplace_back(l.weights.size(), 0.0);
        st.mb.emplace_back(l.bias.size(), 0.0);
        st.vb.emplace_back(l.bias.size(), 0.0);
    }
    std::vector<NormAccum> accums(net.layers.size());

    TrainHistory hist;
    double lr = cfg.base_lr;
    double best_val = std::numeric_limits<double>::infinity();
    WeightSnapshot best;
    int rising = 0;

    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        if (const auto it = cfg.lr_factors.find(epoch); it != cfg.lr_factors.end())
            lr *= it->second;

        // deterministic per-epoch shuffle of the training split
        const auto perm = rng.permutation(n_train);
        std::vector<std::size_t> order(n_train);
        for (std::size_t k = 0; k < n_train; ++k) order[k] = train_idx[perm[k]];

        const bool first_epoch = epoch == 1;
        double epoch_loss = 0.0;
        for (std::size_t lo = 0; lo < n_train; lo += cfg.batch_size) {
            const std::size_t hi = std::min(n_train, lo + cfg.batch_size);
            const Batch bx = gather_batch(inputs, order, lo, hi);
            const auto bt = gather_targets(targets, target_width, order, lo, hi);

            std::vector<LayerCache> caches(net.layers.size());
            Batch out;
            out.count = bx.count;
            out.shape = net.output_shape();
            out.values = forward_impl(net, bx, &caches, first_epoch ? &accums : nullptr);
            if (first_epoch)
                for (std::size_t l = 0; l < net.layers.size(); ++l)
                    if (net.layers[l].spec.kind == LayerKind::normalization &&
                        !net.layers[l].norm_frozen && !caches[l].mean.empty()) {
                        net.layers[l].norm_mean = caches[l].mean;
                        net.layers[l].norm_scale = caches[l].scale;
                    }

            const auto lg = loss_and_grad(loss, out, bt);
            epoch_loss += lg.value * static_cast<double>(hi - lo);

            Gradients g;
            g.weights.resize(net.layers.size());
            g.bias.resize(net.layers.size());
            std::vector<double> dcur = lg.grad;
            std::vector<double> dprev;
            for (std::size_t l = net.layers.size(); l-- > 0;) {
                layer_backward(net.layers[l], caches[l], bx.count, dcur, dprev, g.weights[l],
                               g.bias[l]);
                dcur.swap(dprev);
            }
            adam_step(net, g, st, lr);
        }
        if (first_epoch)
            for (auto& l : net.layers)
                if (l.spec.kind == LayerKind::normalization) l.norm_frozen = true;

        hist.train_loss.push_back(epoch_loss / static_cast<double>(n_train));

        if (n_val == 0) continue;
        const double vl = evaluate_loss(net, loss, val_inputs, val_targets);
        hist.val_loss.push_back(vl);
        if (vl < best_val) {
            best_val = vl;
            hist.best_epoch = epoch;
            if (cfg.restore_best) best = snapshot(net);
        }
        rising = hist.val_loss.size() >= 2 && vl > hist.val_loss[hist.val_loss.size() - 2]
                     ? rising + 1
                     : 0;
        if (rising >= cfg.patience) {
            hist.early_stopped = true;
            break;
        }
    }

    if (cfg.restore_best && hist.best_epoch > 0) restore(net, best);
    return hist;
}

nlohmann::json network_to_json(const Network& net) {
    nlohmann::json doc;
    doc["format"] = 1;
    doc["input_shape"] = {{"length", net.input_shape.length},
                          {"channels", net.input_shape.channels}};
    doc["head"] = head_name(net.head);
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& l : net.layers) {
        nlohmann::json j;
        switch (l.spec.kind) {
            case LayerKind::dense:
                j["kind"] = "dense";
                j["units"] = l.spec.units;
                j["activation"] = activation_name(l.spec.activation);
                j["weights"] = l.weights;
                j["bias"] = l.bias;
                break;
            case LayerKind::conv1d:
                j["kind"] = "conv1d";
                j["filters"] = l.spec.filters;
                j["kernel"] = l.spec.kernel;
                j["activation"] = activation_name(l.spec.activation);
                j["weights"] = l.weights;
                j["bias"] = l.bias;
                break;
            case LayerKind::pool1d:
                j["kind"] = "pool1d";
                j["mode"] = l.spec.pool_mode == PoolMode::max ? "max" : "avg";
                j["size"] = l.spec.pool_size;
                break;
            case LayerKind::flatten:
                j["kind"] = "flatten";
                break;
            case LayerKind::normalization:
                j["kind"] = "normalization";
                j["mean"] = l.norm_mean;
                j["scale"] = l.norm_scale;
                j["frozen"] = l.norm_frozen;
                break;
        }
        layers.push_back(std::move(j));
    }
    doc["layers"] = std::move(layers);
    return doc;
}

Network network_from_json(const nlohmann::json& doc) {
    if (!doc.is_object() || doc.value("format", 0) != 1)
        throw schema_error("unsupported network document format");
    Shape input{doc.at("input_shape").at("length").get<int>(),
                doc.at("input_shape").at("channels").get<int>()};
    const auto head = head_from_name(doc.at("head").get<std::string>());

    std::vector<LayerSpec> specs;
    for (const auto& j : doc.at("layers")) {
        const auto kind = j.at("kind").get<std::string>();
        if (kind == "dense")
            specs.push_back(LayerSpec::dense(j.at("units").get<int>(),
                                             activation_from_name(j.at("activation"))));
        else if (kind == "conv1d")
            specs.push_back(LayerSpec::conv1d(j.at("filters").get<int>(), j.at("kernel").get<int>(),
                                              activation_from_name(j.at("activation"))));
        else if (kind == "pool1d")
            specs.push_back(LayerSpec::pool1d(
                j.at("mode").get<std::string>() == "max" ? PoolMode::max : PoolMode::avg,
                j.at("size").get<int>()));
        else if (kind == "flatten")
            specs.push_back(LayerSpec::flatten());
        else if (kind == "normalization")
            specs.push_back(LayerSpec::normalization());
        else
            throw schema_error("unknown layer kind '" + kind + "'");
    }

    Network net = build_network(specs, head, input, 0);
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        const auto& j = doc.at("layers")[l];
        auto& layer = net.layers[l];
        if (layer.spec.kind == LayerKind::dense || layer.spec.kind == LayerKind::conv1d) {
            const auto w = j.at("weights").get<std::vector<double>>();
            const auto b = j.at("bias").get<std::vector<double>>();
            if (w.size() != layer.weights.size() || b.size() != layer.bias.size())
                throw schema_error("weight array size does not match the layer shape");
            layer.weights = w;
            layer.bias = b;
        } else if (layer.spec.kind == LayerKind::normalization) {
            layer.norm_mean = j.at("mean").get<std::vector<double>>();
            layer.norm_scale = j.at("scale").get<std::vector<double>>();
            layer.norm_frozen = j.at("frozen").get<bool>();
            if (layer.norm_mean.size() != static_cast<std::size_t>(layer.in_shape.channels) ||
                layer.norm_scale.size() != layer.norm_mean.size())
                throw schema_error("normalization stats do not match the layer shape");
        }
    }
    return net;
}

}  // namespace enscal
