#include "enscal/pipeline.hpp"

namespace enscal {

// The default setups the methods ship with, one per variable. The files under
// presets/ are the serialized form of exactly these configurations.
MethodConfig builtin_preset(Variable v) {
    MethodConfig cfg;
    cfg.method = Method::mlp_s;
    cfg.variable = v;
    cfg.aux_loss = Loss::mae;

    // distribution networks: step-halved learning rate on a fixed schedule
    TrainConfig dist_train;
    dist_train.base_lr = 0.01;
    dist_train.lr_factors = {{8, 0.5}, {28, 0.5}, {48, 0.5}, {68, 0.5}};
    dist_train.batch_size = 1024;
    dist_train.max_epochs = 100;
    dist_train.patience = 10;
    dist_train.val_fraction = 0.2;

    // auxiliary networks: geometric decay through epoch 59
    TrainConfig aux_train = dist_train;
    aux_train.lr_factors.clear();
    for (int epoch = 3; epoch <= 59; ++epoch) aux_train.lr_factors[epoch] = 0.97;
    TrainConfig conv_train = aux_train;
    conv_train.batch_size = 512;

    if (v == Variable::wind_speed_mps) {
        cfg.family = Family::tn;
        cfg.window = {51, Spatial::local, Pooling::half_day_pooled};
        cfg.dist_features = {"f_ctrl", "mean_exch", "sd"};
        cfg.aux_mlp_features = {"mean_all", "sd"};
        cfg.aux_c1d_features = {"f_ctrl", "mean_exch", "sd"};
        cfg.dist_net = {{LayerSpec::dense(28, Activation::elu)}, dist_train};
        cfg.aux_mlp_net = {
            {LayerSpec::dense(5, Activation::relu), LayerSpec::dense(15, Activation::relu)},
            aux_train};
        cfg.aux_c1d_net = {{LayerSpec::conv1d(24, 3, Activation::relu),
                            LayerSpec::pool1d(PoolMode::max, 2), LayerSpec::flatten(),
                            LayerSpec::dense(25, Activation::relu)},
                           conv_train};
        cfg.slices = {16, 4};
        cfg.target_scale = 1.0;
    } else {
        cfg.family = Family::cn0;
        cfg.window = {31, Spatial::regional, Pooling::half_day_pooled};
        cfg.dist_features = {"f_ctrl", "mean_exch", "sd", "lead_slot", "p0"};
        cfg.aux_mlp_features = {"f_ctrl", "mean_exch", "sd", "lead_slot"};
        cfg.aux_c1d_features = {"mean_all", "sd"};
        cfg.dist_net = {{LayerSpec::dense(35, Activation::exponential)}, dist_train};
        cfg.aux_mlp_net = {{LayerSpec::dense(32, Activation::relu), LayerSpec::normalization()},
                           aux_train};
        cfg.aux_c1d_net = {{LayerSpec::conv1d(35, 5, Activation::relu),
                            LayerSpec::pool1d(PoolMode::avg, 2),
                            LayerSpec::conv1d(16, 2, Activation::relu), LayerSpec::flatten(),
                            LayerSpec::dense(30, Activation::relu)},
                           conv_train};
        cfg.slices = {12, 1};
        // irradiance spans three orders of magnitude; train in kilowatt units
        cfg.target_scale = 1000.0;
    }
    return cfg;
}

}  // namespace enscal
