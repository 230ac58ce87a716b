#include "mtr/network.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "mtr/parallel.hpp"

namespace mtr {

namespace {

std::size_t conv_out_dim(std::size_t in, std::size_t kernel, std::size_t stride) {
    const std::size_t pad = kernel / 2;
    return (in + 2 * pad - kernel) / stride + 1;
}

void activate(std::span<double> v, Activation a) {
    switch (a) {
        case Activation::Relu:
            for (auto& x : v) x = x > 0.0 ? x : 0.0;
            break;
        case Activation::Tanh:
            for (auto& x : v) x = std::tanh(x);
            break;
        case Activation::Identity:
            break;
    }
}

// grad *= f'(pre) expressed through the post-activation value.
void activation_backward(std::span<double> grad, std::span<const double> post, Activation a) {
    switch (a) {
        case Activation::Relu:
            for (std::size_t i = 0; i < grad.size(); ++i) grad[i] = post[i] > 0.0 ? grad[i] : 0.0;
            break;
        case Activation::Tanh:
            for (std::size_t i = 0; i < grad.size(); ++i) grad[i] *= 1.0 - post[i] * post[i];
            break;
        case Activation::Identity:
            break;
    }
}

void im2col(std::span<const double> in, const TensorShape& s, std::size_t k, std::size_t stride, std::size_t oh,
            std::size_t ow, std::vector<double>& col) {
    const std::size_t pad = k / 2;
    const std::size_t npix = oh * ow;
    col.assign(s.channels * k * k * npix, 0.0);
    std::size_t row = 0;
    for (std::size_t c = 0; c < s.channels; ++c) {
        const double* plane = in.data() + c * s.height * s.width;
        for (std::size_t ky = 0; ky < k; ++ky) {
            for (std::size_t kx = 0; kx < k; ++kx, ++row) {
                double* dst = col.data() + row * npix;
                for (std::size_t oy = 0; oy < oh; ++oy) {
                    const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
                    if (iy < 0 || iy >= static_cast<long>(s.height)) continue;
                    const double* src = plane + static_cast<std::size_t>(iy) * s.width;
                    for (std::size_t ox = 0; ox < ow; ++ox) {
                        const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
                        if (ix < 0 || ix >= static_cast<long>(s.width)) continue;
                        dst[oy * ow + ox] = src[ix];
                    }
                }
            }
        }
    }
}

void col2im_add(std::span<const double> col, const TensorShape& s, std::size_t k, std::size_t stride, std::size_t oh,
                std::size_t ow, std::span<double> out) {
    const std::size_t pad = k / 2;
    const std::size_t npix = oh * ow;
    std::size_t row = 0;
    for (std::size_t c = 0; c < s.channels; ++c) {
        double* plane = out.data() + c * s.height * s.width;
        for (std::size_t ky = 0; ky < k; ++ky) {
            for (std::size_t kx = 0; kx < k; ++kx, ++row) {
                const double* src = col.data() + row * npix;
                for (std::size_t oy = 0; oy < oh; ++oy) {
                    const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
                    if (iy < 0 || iy >= static_cast<long>(s.height)) continue;
                    double* dst = plane + static_cast<std::size_t>(iy) * s.width;
                    for (std::size_t ox = 0; ox < ow; ++ox) {
                        const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
                        if (ix < 0 || ix >= static_cast<long>(s.width)) continue;
                        dst[ix] += src[oy * ow + ox];
                    }
                }
            }
        }
    }
}

// y = W x + b, W row-major [out][in].
void dense(std::span<const double> w, std::span<const double> b, std::span<const double> x, std::span<double> y) {
    const std::size_t n_in = x.size();
    for (std::size_t o = 0; o < y.size(); ++o) {
        const double* row = w.data() + o * n_in;
        double acc = 0.0;
        for (std::size_t i = 0; i < n_in; ++i) acc += row[i] * x[i];
        y[o] = acc + b[o];
    }
}

// gW += gy x^T, gb += gy, gx (optional) += W^T gy.
void dense_backward(std::span<const double> w, std::span<const double> x, std::span<const double> gy,
                    std::span<double> gw, std::span<double> gb, std::span<double> gx) {
    const std::size_t n_in = x.size();
    for (std::size_t o = 0; o < gy.size(); ++o) {
        const double g = gy[o];
        if (g == 0.0) continue;
        gb[o] += g;
        double* grow = gw.data() + o * n_in;
        for (std::size_t i = 0; i < n_in; ++i) grow[i] += g * x[i];
        if (!gx.empty()) {
            const double* row = w.data() + o * n_in;
            for (std::size_t i = 0; i < n_in; ++i) gx[i] += g * row[i];
        }
    }
}

void add_block(NetworkParams& p, std::string name, std::vector<std::size_t> shape) {
    const std::size_t size = std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
    const std::size_t offset = p.values.size();
    p.blocks.push_back({std::move(name), std::move(shape), offset, size});
    p.values.resize(offset + size, 0.0);
}

}  // namespace

// ---------------------------------------------------------------------------

void NetworkConfig::validate() const {
    if (input.size() == 0) throw ConfigError("NetworkConfig: input shape must be positive");
    if (fc6_width == 0 || fc7_width == 0) throw ConfigError("NetworkConfig: fc widths must be positive");
    if (num_keypoints == 0 || num_actions == 0) throw ConfigError("NetworkConfig: head sizes must be positive");
    for (const auto& c : conv) {
        if (c.out_channels == 0 || c.kernel == 0 || c.stride == 0) {
            throw ConfigError("NetworkConfig: conv layer dimensions must be positive");
        }
    }
    (void)conv_output_shapes();
}

std::vector<TensorShape> NetworkConfig::conv_output_shapes() const {
    std::vector<TensorShape> shapes;
    TensorShape s = input;
    for (const auto& c : conv) {
        if (s.height + 2 * (c.kernel / 2) < c.kernel || s.width + 2 * (c.kernel / 2) < c.kernel) {
            throw ConfigError("NetworkConfig: conv kernel larger than its padded input");
        }
        s = {c.out_channels, conv_out_dim(s.height, c.kernel, c.stride), conv_out_dim(s.width, c.kernel, c.stride)};
        shapes.push_back(s);
    }
    return shapes;
}

const ParamBlock& NetworkParams::block(const std::string& name) const {
    for (const auto& b : blocks) {
        if (b.name == name) return b;
    }
    throw std::out_of_range("NetworkParams: no block named " + name);
}

std::span<double> NetworkParams::view(const std::string& name) {
    const auto& b = block(name);
    return {values.data() + b.offset, b.size};
}

std::span<const double> NetworkParams::view(const std::string& name) const {
    const auto& b = block(name);
    return {values.data() + b.offset, b.size};
}

NetworkParams NetworkParams::zeros_like() const {
    NetworkParams z;
    z.blocks = blocks;
    z.values.assign(values.size(), 0.0);
    return z;
}

std::vector<std::string> head_block_names(Head head) {
    switch (head) {
        case Head::Detection:
            return {"det.weight", "det.bias"};
        case Head::Pose:
            return {"pose.weight", "pose.bias"};
        case Head::Action:
            return {"action.weight", "action.bias"};
    }
    return {};
}

// ---------------------------------------------------------------------------

MultitaskNet::MultitaskNet(NetworkConfig config) : config_(std::move(config)) {
    config_.validate();
    conv_shapes_ = config_.conv_output_shapes();
    std::size_t in_c = config_.input.channels;
    for (std::size_t i = 0; i < config_.conv.size(); ++i) {
        const auto& c = config_.conv[i];
        add_block(layout_, "conv" + std::to_string(i + 1) + ".weight", {c.out_channels, in_c, c.kernel, c.kernel});
        add_block(layout_, "conv" + std::to_string(i + 1) + ".bias", {c.out_channels});
        in_c = c.out_channels;
    }
    const std::size_t flat = conv_shapes_.empty() ? config_.input.size() : conv_shapes_.back().size();
    add_block(layout_, "fc6.weight", {config_.fc6_width, flat});
    add_block(layout_, "fc6.bias", {config_.fc6_width});
    add_block(layout_, "fc7.weight", {config_.fc7_width, config_.fc6_width});
    add_block(layout_, "fc7.bias", {config_.fc7_width});
    const std::size_t h = config_.head_input_width();
    add_block(layout_, "det.weight", {2, h});
    add_block(layout_, "det.bias", {2});
    add_block(layout_, "pose.weight", {2 * config_.num_keypoints, h});
    add_block(layout_, "pose.bias", {2 * config_.num_keypoints});
    add_block(layout_, "action.weight", {config_.num_actions, h});
    add_block(layout_, "action.bias", {config_.num_actions});
}

NetworkParams MultitaskNet::zero_params() const { return layout_.zeros_like(); }

NetworkParams MultitaskNet::init_params(std::uint64_t seed) const {
    NetworkParams p = zero_params();
    std::mt19937_64 rng(seed);
    for (const auto& b : p.blocks) {
        if (b.shape.size() < 2) continue;  // biases stay zero
        const std::size_t fan_in = b.size / b.shape[0];
        const bool head = b.name.starts_with("det.") || b.name.starts_with("pose.") || b.name.starts_with("action.");
        const double stddev = std::sqrt((head ? 1.0 : 2.0) / static_cast<double>(fan_in));
        std::normal_distribution<double> dist(0.0, stddev);
        for (std::size_t i = 0; i < b.size; ++i) p.values[b.offset + i] = dist(rng);
    }
    return p;
}

void MultitaskNet::check(const NetworkParams& params, std::span<const double> input) const {
    if (input.size() != config_.input.size()) {
        throw ConfigError("MultitaskNet: input has " + std::to_string(input.size()) + " values, expected " +
                          std::to_string(config_.input.size()));
    }
    if (params.blocks != layout_.blocks) throw ConfigError("MultitaskNet: parameter layout does not match config");
}

HeadOutputs MultitaskNet::forward(const NetworkParams& params, std::span<const double> input) const {
    ForwardCache cache;
    forward(params, input, cache);
    return std::move(cache.outputs);
}

void MultitaskNet::forward(const NetworkParams& params, std::span<const double> input, ForwardCache& cache) const {
    check(params, input);
    const std::size_t n_conv = config_.conv.size();
    cache.cols.resize(n_conv);
    cache.conv_out.resize(n_conv);

    std::span<const double> x = input;
    TensorShape in_shape = config_.input;
    for (std::size_t l = 0; l < n_conv; ++l) {
        const auto& spec = config_.conv[l];
        const auto& os = conv_shapes_[l];
        const std::size_t npix = os.height * os.width;
        const std::size_t rows = in_shape.channels * spec.kernel * spec.kernel;
        im2col(x, in_shape, spec.kernel, spec.stride, os.height, os.width, cache.cols[l]);
        const auto w = params.view("conv" + std::to_string(l + 1) + ".weight");
        const auto b = params.view("conv" + std::to_string(l + 1) + ".bias");
        auto& out = cache.conv_out[l];
        out.resize(os.size());
        const double* col = cache.cols[l].data();
        for (std::size_t oc = 0; oc < os.channels; ++oc) {
            double* dst = out.data() + oc * npix;
            std::fill(dst, dst + npix, b[oc]);
            const double* wrow = w.data() + oc * rows;
            for (std::size_t r = 0; r < rows; ++r) {
                const double wv = wrow[r];
                const double* src = col + r * npix;
                for (std::size_t p = 0; p < npix; ++p) dst[p] += wv * src[p];
            }
        }
        activate(out, spec.activation);
        x = out;
        in_shape = os;
    }

    cache.fc6.resize(config_.fc6_width);
    dense(params.view("fc6.weight"), params.view("fc6.bias"), x, cache.fc6);
    activate(cache.fc6, config_.fc_activation);
    cache.fc7.resize(config_.fc7_width);
    dense(params.view("fc7.weight"), params.view("fc7.bias"), cache.fc6, cache.fc7);
    activate(cache.fc7, config_.fc_activation);

    const std::span<const double> h =
        config_.heads_on == HeadAttachment::Fc6 ? std::span<const double>(cache.fc6) : std::span<const double>(cache.fc7);
    auto& out = cache.outputs;

    std::array<double, 2> det_logits{};
    dense(params.view("det.weight"), params.view("det.bias"), h, det_logits);
    const auto det = softmax(det_logits);
    out.det_probs = {det[0], det[1]};

    out.pose_coords.resize(2 * config_.num_keypoints);
    dense(params.view("pose.weight"), params.view("pose.bias"), h, out.pose_coords);

    cache.scratch_a.resize(config_.num_actions);
    dense(params.view("action.weight"), params.view("action.bias"), h, cache.scratch_a);
    out.action_probs = softmax(cache.scratch_a);

    out.fc6 = cache.fc6;
    out.fc7 = cache.fc7;
}

SampleGradients MultitaskNet::backward(const NetworkParams& params, std::span<const double> input,
                                       const RegionSample& sample, const TaskWeights& weights) const {
    ForwardCache cache;
    forward(params, input, cache);
    SampleGradients out{{}, zero_params()};
    out.loss = accumulate_gradients(params, input, sample, weights, cache, out.grads);
    return out;
}

TotalLoss MultitaskNet::accumulate_gradients(const NetworkParams& params, std::span<const double> input,
                                             const RegionSample& sample, const TaskWeights& weights,
                                             ForwardCache& cache, NetworkParams& grads) const {
    TotalLoss loss = loss_total(cache.outputs, sample, weights);
    const auto& g = loss.grads;
    const bool any_head = g.det_logits[0] != 0.0 || g.det_logits[1] != 0.0 ||
                          std::any_of(g.pose.begin(), g.pose.end(), [](double v) { return v != 0.0; }) ||
                          std::any_of(g.action_logits.begin(), g.action_logits.end(), [](double v) { return v != 0.0; });
    if (!any_head) return loss;

    const bool on_fc6 = config_.heads_on == HeadAttachment::Fc6;
    const std::span<const double> h = on_fc6 ? std::span<const double>(cache.fc6) : std::span<const double>(cache.fc7);

    std::vector<double> gh(h.size(), 0.0);
    dense_backward(params.view("det.weight"), h, g.det_logits, grads.view("det.weight"), grads.view("det.bias"), gh);
    dense_backward(params.view("pose.weight"), h, g.pose, grads.view("pose.weight"), grads.view("pose.bias"), gh);
    dense_backward(params.view("action.weight"), h, g.action_logits, grads.view("action.weight"),
                   grads.view("action.bias"), gh);

    std::vector<double> g6(config_.fc6_width, 0.0);
    if (on_fc6) {
        g6 = gh;
    } else {
        activation_backward(gh, cache.fc7, config_.fc_activation);
        dense_backward(params.view("fc7.weight"), cache.fc6, gh, grads.view("fc7.weight"), grads.view("fc7.bias"), g6);
    }
    activation_backward(g6, cache.fc6, config_.fc_activation);

    const std::size_t n_conv = config_.conv.size();
    const std::span<const double> flat =
        n_conv == 0 ? input : std::span<const double>(cache.conv_out[n_conv - 1]);
    std::vector<double> gx(n_conv == 0 ? 0 : flat.size(), 0.0);
    dense_backward(params.view("fc6.weight"), flat, g6, grads.view("fc6.weight"), grads.view("fc6.bias"), gx);

    std::vector<double> gcol;
    for (std::size_t l = n_conv; l-- > 0;) {
        const auto& spec = config_.conv[l];
        const auto& os = conv_shapes_[l];
        const TensorShape in_shape = l == 0 ? config_.input : conv_shapes_[l - 1];
        const std::size_t npix = os.height * os.width;
        const std::size_t rows = in_shape.channels * spec.kernel * spec.kernel;
        activation_backward(gx, cache.conv_out[l], spec.activation);

        const auto w = params.view("conv" + std::to_string(l + 1) + ".weight");
        auto gw = grads.view("conv" + std::to_string(l + 1) + ".weight");
        auto gb = grads.view("conv" + std::to_string(l + 1) + ".bias");
        const double* col = cache.cols[l].data();
        const bool need_input_grad = l > 0;
        if (need_input_grad) gcol.assign(rows * npix, 0.0);
        for (std::size_t oc = 0; oc < os.channels; ++oc) {
            const double* go = gx.data() + oc * npix;
            double sum = 0.0;
            for (std::size_t p = 0; p < npix; ++p) sum += go[p];
            gb[oc] += sum;
            const double* wrow = w.data() + oc * rows;
            double* gwrow = gw.data() + oc * rows;
            for (std::size_t r = 0; r < rows; ++r) {
                const double* src = col + r * npix;
                double acc = 0.0;
                for (std::size_t p = 0; p < npix; ++p) acc += go[p] * src[p];
                gwrow[r] += acc;
                if (need_input_grad) {
                    const double wv = wrow[r];
                    double* dst = gcol.data() + r * npix;
                    for (std::size_t p = 0; p < npix; ++p) dst[p] += wv * go[p];
                }
            }
        }
        if (need_input_grad) {
            std::vector<double> gin(in_shape.size(), 0.0);
            col2im_add(gcol, in_shape, spec.kernel, spec.stride, os.height, os.width, gin);
            gx = std::move(gin);
        }
    }
    return loss;
}

// ---------------------------------------------------------------------------

void InMemoryRegions::add(std::vector<double> tensor, RegionSample sample) {
    tensors_.push_back(std::move(tensor));
    samples_.push_back(std::move(sample));
}

void InMemoryRegions::render(std::size_t i, std::span<double> out) const {
    const auto& t = tensors_.at(i);
    if (t.size() != out.size()) throw ConfigError("InMemoryRegions: tensor size mismatch");
    std::copy(t.begin(), t.end(), out.begin());
}

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("TrainConfig: learning rate must be positive");
    if (batch_size < 1) throw ConfigError("TrainConfig: batch size must be at least 1");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("TrainConfig: momentum must lie in [0,1)");
    if (!(positive_fraction >= 0.0 && positive_fraction <= 1.0)) {
        throw ConfigError("TrainConfig: positive fraction must lie in [0,1]");
    }
    weights.validate();
}

namespace {

// A region is foreground when it carries a label for some weighted head
// other than the detection negatives.
bool is_foreground(const RegionSample& s, const TaskWeights& w) {
    return (w.detection > 0.0 && s.det_label == DetLabel::Positive) || (w.pose > 0.0 && s.pose_active()) ||
           (w.action > 0.0 && s.action_active());
}

// Cycles through a pool in freshly shuffled epochs.
class PoolSampler {
public:
    PoolSampler(std::vector<std::size_t> items, std::mt19937_64& rng) : items_(std::move(items)), rng_(rng) {}
    bool empty() const noexcept { return items_.empty(); }
    std::size_t next() {
        if (cursor_ == 0) std::shuffle(items_.begin(), items_.end(), rng_);
        const std::size_t v = items_[cursor_];
        cursor_ = (cursor_ + 1) % items_.size();
        return v;
    }

private:
    std::vector<std::size_t> items_;
    std::mt19937_64& rng_;
    std::size_t cursor_ = 0;
};

}  // namespace

TrainResult train(const MultitaskNet& net, const RegionSource& data, const TrainConfig& cfg,
                  std::optional<TrainState> resume) {
    cfg.validate();
    if (data.size() == 0) throw ConfigError("train: empty dataset");

    TrainResult result;
    if (resume) {
        result.state = std::move(*resume);
        if (result.state.params.blocks != net.zero_params().blocks) {
            throw ConfigError("train: resume state does not match network config");
        }
        if (result.state.velocity.size() != result.state.params.count()) {
            result.state.velocity.assign(result.state.params.count(), 0.0);
        }
    } else {
        result.state.params = net.init_params(cfg.seed);
        result.state.velocity.assign(result.state.params.count(), 0.0);
    }

    std::vector<std::size_t> fg, bg;
    for (std::size_t i = 0; i < data.size(); ++i) (is_foreground(data.sample(i), cfg.weights) ? fg : bg).push_back(i);

    std::mt19937_64 rng(cfg.seed ^ (0x9e3779b97f4a7c15ULL * (result.state.iterations_done + 1)));
    PoolSampler fg_pool(fg, rng);
    PoolSampler bg_pool(bg, rng);

    const std::size_t batch = cfg.batch_size;
    std::size_t n_fg = static_cast<std::size_t>(std::llround(cfg.positive_fraction * static_cast<double>(batch)));
    if (fg_pool.empty()) n_fg = 0;
    if (bg_pool.empty()) n_fg = batch;

    const std::size_t in_size = net.config().input.size();
    const std::size_t n_params = result.state.params.count();
    std::vector<std::vector<double>> inputs(batch, std::vector<double>(in_size));
    std::vector<NetworkParams> sample_grads(batch, result.state.params.zeros_like());
    std::vector<ForwardCache> caches(batch);
    std::vector<TotalLoss> losses(batch);
    std::vector<std::size_t> picks(batch);
    std::vector<double> grad(n_params);

    auto& params = result.state.params;
    auto& velocity = result.state.velocity;
    const double inv_batch = 1.0 / static_cast<double>(batch);

    for (std::size_t it = 0; it < cfg.iterations; ++it) {
        const std::size_t global_it = result.state.iterations_done;
        for (std::size_t b = 0; b < batch; ++b) picks[b] = b < n_fg ? fg_pool.next() : bg_pool.next();

        parallel_for(batch, cfg.threads, [&](std::size_t b) {
            data.render(picks[b], inputs[b]);
            std::fill(sample_grads[b].values.begin(), sample_grads[b].values.end(), 0.0);
            net.forward(params, inputs[b], caches[b]);
            losses[b] = net.accumulate_gradients(params, inputs[b], data.sample(picks[b]), cfg.weights, caches[b],
                                                 sample_grads[b]);
        });

        // Fixed-order reduction keeps results independent of the thread count.
        std::fill(grad.begin(), grad.end(), 0.0);
        LossTracePoint point{global_it};
        for (std::size_t b = 0; b < batch; ++b) {
            const auto& sg = sample_grads[b].values;
            for (std::size_t i = 0; i < n_params; ++i) grad[i] += sg[i];
            point.total += losses[b].total;
            point.detection += losses[b].detection;
            point.pose += losses[b].pose;
            point.action += losses[b].action;
            result.clamp_count += losses[b].clamp_count;
        }
        point.total *= inv_batch;
        point.detection *= inv_batch;
        point.pose *= inv_batch;
        point.action *= inv_batch;
        if (!std::isfinite(point.total) || point.total > cfg.max_loss) {
            throw TrainingDiverged("train: loss " + std::to_string(point.total) + " at iteration " +
                                   std::to_string(global_it) + " (limit " + std::to_string(cfg.max_loss) + ")");
        }
        result.trace.push_back(point);

        double scale = inv_batch;
        if (cfg.clip_norm > 0.0) {
            double sq = 0.0;
            for (double v : grad) sq += v * v;
            const double norm = std::sqrt(sq) * inv_batch;
            if (norm > cfg.clip_norm) scale *= cfg.clip_norm / norm;
        }
        double lr = cfg.learning_rate;
        if (cfg.lr_step > 0) lr *= std::pow(cfg.lr_gamma, static_cast<double>(global_it / cfg.lr_step));
        for (std::size_t i = 0; i < n_params; ++i) {
            velocity[i] = cfg.momentum * velocity[i] - lr * (grad[i] * scale);
            params.values[i] += velocity[i];
        }
        ++result.state.iterations_done;
    }
    return result;
}

std::vector<double> score_action_detection(const HeadOutputs& outputs, ActionScoreMode mode) {
    std::vector<double> s(outputs.action_probs);
    if (mode == ActionScoreMode::Product) {
        for (auto& v : s) v *= outputs.person_prob();
    }
    return s;
}

}  // namespace mtr
