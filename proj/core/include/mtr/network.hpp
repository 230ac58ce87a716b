#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mtr/labeling.hpp"
#include "mtr/losses.hpp"

namespace mtr {

enum class Activation : std::uint8_t { Relu = 0, Tanh = 1, Identity = 2 };

struct TensorShape {
    std::size_t channels = 0;
    std::size_t height = 0;
    std::size_t width = 0;

    std::size_t size() const noexcept { return channels * height * width; }
    friend bool operator==(const TensorShape&, const TensorShape&) = default;
};

struct ConvSpec {
    std::size_t out_channels = 0;
    std::size_t kernel = 3;
    std::size_t stride = 1;
    Activation activation = Activation::Relu;

    friend bool operator==(const ConvSpec&, const ConvSpec&) = default;
};

enum class HeadAttachment : std::uint8_t { Fc6 = 0, Fc7 = 1 };

/// Shared trunk (conv stack, fc6, fc7) feeding three task heads.
/// Convolutions use zero padding of kernel / 2.
struct NetworkConfig {
    TensorShape input{4, 24, 24};
    std::vector<ConvSpec> conv{{8, 3, 2}, {16, 3, 2}, {32, 3, 2}};
    std::size_t fc6_width = 64;
    std::size_t fc7_width = 64;
    Activation fc_activation = Activation::Relu;
    std::size_t num_keypoints = kNumKeypoints;
    std::size_t num_actions = 10;
    HeadAttachment heads_on = HeadAttachment::Fc7;

    void validate() const;
    std::vector<TensorShape> conv_output_shapes() const;
    std::size_t head_input_width() const noexcept { return heads_on == HeadAttachment::Fc6 ? fc6_width : fc7_width; }

    friend bool operator==(const NetworkConfig&, const NetworkConfig&) = default;
};

struct ParamBlock {
    std::string name;
    std::vector<std::size_t> shape;
    std::size_t offset = 0;
    std::size_t size = 0;

    friend bool operator==(const ParamBlock&, const ParamBlock&) = default;
};

/// All trainable tensors stored in one flat buffer; blocks index into it.
struct NetworkParams {
    std::vector<ParamBlock> blocks;
    std::vector<double> values;

    std::size_t count() const noexcept { return values.size(); }
    const ParamBlock& block(const std::string& name) const;
    std::span<double> view(const std::string& name);
    std::span<const double> view(const std::string& name) const;
    NetworkParams zeros_like() const;

    friend bool operator==(const NetworkParams&, const NetworkParams&) = default;
};

enum class Head { Detection, Pose, Action };

/// Parameter block names belonging to the given task head.
std::vector<std::string> head_block_names(Head head);

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class TrainingDiverged : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Intermediate activations of one forward pass, reusable across calls.
struct ForwardCache {
    std::vector<std::vector<double>> cols;     // im2col buffer per conv layer
    std::vector<std::vector<double>> conv_out;  // post-activation per conv layer
    std::vector<double> fc6;
    std::vector<double> fc7;
    std::vector<double> scratch_a;
    std::vector<double> scratch_b;
    HeadOutputs outputs;
};

struct SampleGradients {
    TotalLoss loss;
    NetworkParams grads;
};

class MultitaskNet {
public:
    explicit MultitaskNet(NetworkConfig config);

    const NetworkConfig& config() const noexcept { return config_; }

    NetworkParams zero_params() const;
    /// He-normal trunk weights, scaled-normal head weights, zero biases.
    NetworkParams init_params(std::uint64_t seed) const;

    HeadOutputs forward(const NetworkParams& params, std::span<const double> input) const;
    void forward(const NetworkParams& params, std::span<const double> input, ForwardCache& cache) const;

    SampleGradients backward(const NetworkParams& params, std::span<const double> input, const RegionSample& sample,
                             const TaskWeights& weights) const;
    /// Adds this sample's gradient into `grads`; returns the loss. `cache`
    /// must hold the forward pass of the same (params, input).
    TotalLoss accumulate_gradients(const NetworkParams& params, std::span<const double> input,
                                   const RegionSample& sample, const TaskWeights& weights, ForwardCache& cache,
                                   NetworkParams& grads) const;

private:
    void check(const NetworkParams& params, std::span<const double> input) const;

    NetworkConfig config_;
    std::vector<TensorShape> conv_shapes_;
    NetworkParams layout_;
};

/// Training inputs: labeled regions whose tensors are produced on demand.
class RegionSource {
public:
    virtual ~RegionSource() = default;
    virtual std::size_t size() const = 0;
    virtual const RegionSample& sample(std::size_t i) const = 0;
    virtual void render(std::size_t i, std::span<double> out) const = 0;
};

class InMemoryRegions : public RegionSource {
public:
    void add(std::vector<double> tensor, RegionSample sample);
    std::size_t size() const override { return samples_.size(); }
    const RegionSample& sample(std::size_t i) const override { return samples_.at(i); }
    void render(std::size_t i, std::span<double> out) const override;

private:
    std::vector<std::vector<double>> tensors_;
    std::vector<RegionSample> samples_;
};

struct TrainConfig {
    double learning_rate = 0.01;
    double momentum = 0.9;
    std::size_t batch_size = 32;
    std::size_t iterations = 1000;
    TaskWeights weights{1.0, 1.0, 1.0};
    std::uint64_t seed = 0;
    double positive_fraction = 0.25;  // share of each minibatch drawn from foreground regions
    std::size_t lr_step = 0;          // multiply the rate by lr_gamma every lr_step iterations; 0 disables
    double lr_gamma = 0.1;
    double clip_norm = 0.0;  // global gradient-norm clip; 0 disables
    double max_loss = 1e6;
    std::size_t threads = 1;

    void validate() const;
};

struct LossTracePoint {
    std::size_t iteration = 0;
    double total = 0.0;
    double detection = 0.0;
    double pose = 0.0;
    double action = 0.0;
};

/// Parameters plus optimizer state, enough to resume training.
struct TrainState {
    NetworkParams params;
    std::vector<double> velocity;
    std::size_t iterations_done = 0;
};

struct TrainResult {
    TrainState state;
    std::vector<LossTracePoint> trace;
    std::size_t clamp_count = 0;
};

/// Minibatch SGD with momentum on loss_total, averaged over the batch.
/// Deterministic for a fixed config (including across thread counts).
/// Throws TrainingDiverged when the batch loss is non-finite or above max_loss.
TrainResult train(const MultitaskNet& net, const RegionSource& data, const TrainConfig& cfg,
                  std::optional<TrainState> resume = std::nullopt);

enum class ActionScoreMode { Product, ActionOnly };

/// Per-action detection scores: p1 * p_a (Product) or p_a alone.
std::vector<double> score_action_detection(const HeadOutputs& outputs,
                                           ActionScoreMode mode = ActionScoreMode::Product);

}  // namespace mtr
