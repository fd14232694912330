#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

namespace enscal {

// Minimal feed-forward engine: dense / 1d-convolution / pooling / flatten /
// feature-normalization layers, Adam with an epoch-indexed step decay, early
// stopping on a seeded validation split, and CRPS/MAE/MSE losses with analytic
// backprop. Sequence tensors are row-major [sample][time][channel]; a flat
// feature vector is a sequence of length 1.

enum class Activation { linear, relu, elu, exponential };
enum class LayerKind { dense, conv1d, pool1d, flatten, normalization };
enum class PoolMode { max, avg };

// How the raw network outputs are read by the distribution losses:
//   tn_exp_exp    two outputs holding e^mu, e^sigma of a truncated normal
//   cn0_cube_exp  two outputs holding mu^3, e^sigma of a zero-censored normal
//   ln_moments    two outputs holding the mean and variance of a log-normal
//   point         outputs are the predictions themselves
enum class HeadTransform { tn_exp_exp, cn0_cube_exp, ln_moments, point };

enum class Loss { mse, mae, crps_tn, crps_cn0, crps_ln };

std::string activation_name(Activation a);
Activation activation_from_name(const std::string& name);
std::string head_name(HeadTransform h);
HeadTransform head_from_name(const std::string& name);
std::string loss_name(Loss l);
Loss loss_from_name(const std::string& name);

struct Shape {
    int length = 1;    // time steps; 1 for flat feature vectors
    int channels = 0;  // features per step
    int size() const { return length * channels; }
    bool flat() const { return length == 1; }
    friend bool operator==(const Shape&, const Shape&) = default;
};

struct Batch {
    int count = 0;
    Shape shape;
    std::vector<double> values;  // count * length * channels, row-major

    double& at(int i, int t, int c) {
        return values[(static_cast<std::size_t>(i) * shape.length + t) * shape.channels + c];
    }
    double at(int i, int t, int c) const {
        return values[(static_cast<std::size_t>(i) * shape.length + t) * shape.channels + c];
    }
};

Batch make_batch(Shape shape, const std::vector<std::vector<double>>& rows);

struct LayerSpec {
    LayerKind kind = LayerKind::dense;
    Activation activation = Activation::linear;
    int units = 0;                       // dense
    int filters = 0;                     // conv1d
    int kernel = 0;                      // conv1d
    PoolMode pool_mode = PoolMode::max;  // pool1d
    int pool_size = 2;                   // pool1d

    static LayerSpec dense(int units, Activation a = Activation::linear);
    static LayerSpec conv1d(int filters, int kernel, Activation a = Activation::linear);
    static LayerSpec pool1d(PoolMode mode, int size);
    static LayerSpec flatten();
    static LayerSpec normalization();
};

struct Layer {
    LayerSpec spec;
    Shape in_shape, out_shape;
    std::vector<double> weights;  // dense: units*in; conv1d: filters*kernel*in_channels
    std::vector<double> bias;     // dense: units; conv1d: filters
    // normalization state: per-channel affine, non-trainable, frozen after the
    // first training epoch; identity until then
    std::vector<double> norm_mean, norm_scale;
    bool norm_frozen = false;
};

struct Network {
    Shape input_shape;
    HeadTransform head = HeadTransform::point;
    std::vector<Layer> layers;

    Shape output_shape() const { return layers.empty() ? input_shape : layers.back().out_shape; }
    int output_width() const { return output_shape().size(); }
};

Network build_network(const std::vector<LayerSpec>& specs, HeadTransform head, Shape input_shape,
                      std::uint64_t seed);

// frozen-statistics forward pass; reentrant on a const network
Batch forward(const Network& net, const Batch& input);

struct LossResult {
    double value = 0.0;
    std::vector<double> grad;  // same layout as the raw outputs
};

// Mean loss over the batch with the head transform and its Jacobian folded in
// for the crps_* losses. Targets are one value per sample for crps losses and
// output-width values per sample for mse/mae (mean over every element).
LossResult loss_and_grad(Loss loss, const Batch& outputs, const std::vector<double>& targets);

struct Gradients {
    std::vector<std::vector<double>> weights, bias;  // parallel to net.layers
};

// One backward pass; update_norm_stats folds the batch into any unfrozen
// normalization layers before the forward evaluation (training mode).
Gradients compute_gradients(Network& net, const Batch& input, Loss loss,
                            const std::vector<double>& targets, bool update_norm_stats,
                            double& loss_value);

double evaluate_loss(const Network& net, Loss loss, const Batch& input,
                     const std::vector<double>& targets);

struct TrainConfig {
    double base_lr = 0.01;
    std::map<int, double> lr_factors;  // multiplier applied entering that 1-based epoch
    int batch_size = 32;
    int max_epochs = 100;
    int patience = 10;          // consecutive validation-loss increases before stopping
    double val_fraction = 0.2;  // seeded random split
    bool restore_best = false;  // default keeps the final-epoch weights
    std::uint64_t seed = 1;
};

struct TrainHistory {
    std::vector<double> train_loss, val_loss;  // one entry per completed epoch
    int best_epoch = 0;  // 1-based epoch with the lowest validation loss; 0 if no split
    bool early_stopped = false;
};

TrainHistory train(Network& net, const Batch& inputs, const std::vector<double>& targets,
                   Loss loss, const TrainConfig& cfg);

nlohmann::json network_to_json(const Network& net);
Network network_from_json(const nlohmann::json& doc);

}  // namespace enscal
