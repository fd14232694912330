#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "enscal/core_data.hpp"
#include "enscal/distributions.hpp"
#include "enscal/emos.hpp"
#include "enscal/neuralnet.hpp"

namespace enscal {

// End-to-end calibration workflows: rolling training windows, local/regional
// scopes, lead-time pooling, the distribution networks and their point /
// sequence auxiliaries, model artifacts, and prediction.

// ----- training windows ------------------------------------------------------

enum class Spatial { local, regional };
enum class Pooling { per_lead_time, half_day_pooled };

std::string spatial_name(Spatial s);
Spatial spatial_from_name(const std::string& name);
std::string pooling_name(Pooling p);
Pooling pooling_from_name(const std::string& name);

struct WindowConfig {
    int train_days = 51;  // rolling window length in calendar days
    Spatial spatial = Spatial::local;
    Pooling pooling = Pooling::per_lead_time;
};

// Indices into data.cases whose init dates fall in the train_days-day span
// ending the day before valid_date (an epoch-day number). Local scope keeps
// only `station`; regional pools every station. Cases with missing
// observations are skipped unless include_missing is set (sequence models
// build gap-aware series from them).
std::vector<std::size_t> rolling_window(const Dataset& data, std::int64_t valid_date,
                                        const WindowConfig& cfg, const std::string& station = "",
                                        bool include_missing = false);

// Lead-time pool of the two-network scheme: 0 for the first forecast day,
// 1 for the second.
inline int half_day_pool(std::int64_t lead_minutes) { return lead_minutes < 1440 ? 0 : 1; }
std::string pool_tag(int pool);  // "h00-24" / "h24-48"

// ----- sequence slicing ------------------------------------------------------

struct SliceConfig {
    int window_len = 16;  // slice length
    int shift = 4;        // window shift, <= window_len
};

// Start offsets of overlapping training slices over a series of length n:
// i * shift for i = 0 .. floor((n - window_len) / shift).
std::vector<std::size_t> overlapping_slice_starts(std::size_t n, const SliceConfig& cfg);
// Disjoint prediction slices; a remainder shorter than window_len becomes a
// final tail-aligned slice overlapping its predecessor.
std::vector<std::size_t> disjoint_slice_starts(std::size_t n, int window_len);

// A per-location time-ordered series of feature rows and (optionally missing)
// targets, the raw material of sequence models.
struct LocationSeries {
    std::vector<std::vector<double>> features;
    std::vector<std::optional<double>> targets;  // empty() allowed for prediction
};

struct SliceSet {
    std::vector<std::size_t> starts;  // one element per slice kept
    Batch inputs;                     // shape {window_len, n_features}
    std::vector<double> targets;      // starts.size() * window_len; empty for prediction sets
};

// Overlapping training slices; a slice whose target window contains a missing
// observation is dropped whole.
SliceSet make_overlapping_slices(const LocationSeries& series, const SliceConfig& cfg);
// Disjoint feature slices for prediction (targets left empty).
SliceSet make_disjoint_slices(const std::vector<std::vector<double>>& features, int window_len);
// Reassemble per-slice output sequences into one value per series point;
// points covered twice keep the earlier slice's value.
std::vector<double> stitch_slices(std::size_t n, const std::vector<std::size_t>& starts,
                                  const Batch& outputs);

// ----- feature scaling -------------------------------------------------------

// Per-feature affine standardization fitted on a training window and stored
// in the model document, so prediction applies exactly the same map.
struct AffineScaler {
    std::vector<double> shift;
    std::vector<double> scale;  // near-constant features keep scale 1
};

AffineScaler fit_scaler(const std::vector<std::vector<double>>& rows);
std::vector<double> apply_scaler(const AffineScaler& s, const std::vector<double>& row);
void apply_scaler_in_place(const AffineScaler& s, Batch& batch);
nlohmann::json scaler_to_json(const AffineScaler& s);
AffineScaler scaler_from_json(const nlohmann::json& doc);

// ----- method configuration --------------------------------------------------

enum class Method { emos, mlp_s, mlpex };
std::string method_name(Method m);
Method method_from_name(const std::string& name);

// Architecture and training knobs of one network; the output layer is
// appended by the trainer (its width is dictated by the head).
struct NetSpec {
    std::vector<LayerSpec> hidden;
    TrainConfig train;
};

struct MethodConfig {
    Method method = Method::emos;
    Family family = Family::tn;
    Variable variable = Variable::wind_speed_mps;
    WindowConfig window;
    std::vector<std::string> dist_features;     // distribution-network inputs
    std::vector<std::string> aux_mlp_features;  // point-auxiliary inputs
    std::vector<std::string> aux_c1d_features;  // sequence-auxiliary inputs
    NetSpec dist_net;     // shared by the simple and extended networks
    NetSpec aux_mlp_net;  // point head
    NetSpec aux_c1d_net;  // sequence head, output width = slices.window_len
    Loss aux_loss = Loss::mae;
    SliceConfig slices;
    bool standardize_features = true;
    double target_scale = 1.0;  // targets trained in units of obs / target_scale
    std::uint64_t seed = 1;
};

// family/variable compatibility, pooling rules, positive dims; throws config_error
void validate_method_config(const MethodConfig& cfg);
nlohmann::json method_config_to_json(const MethodConfig& cfg);
// missing fields keep their defaults; method/family/seed are usually supplied
// by flags on top of a preset document
MethodConfig method_config_from_json(const nlohmann::json& doc);
MethodConfig load_method_config(const std::string& path);

// Built-in default configuration for each target variable; the shipped preset
// files under presets/ serialize exactly these.
MethodConfig builtin_preset(Variable v);

// ----- feature assembly ------------------------------------------------------

std::vector<double> case_features(const std::vector<std::string>& names,
                                  const EnsembleForecast& fc);
std::vector<std::vector<double>> feature_rows(const Dataset& data,
                                              const std::vector<std::size_t>& idx,
                                              const std::vector<std::string>& names);

// ----- trained models --------------------------------------------------------

struct DistModel {
    Network net;
    AffineScaler scaler;
    std::vector<std::string> features;
    double target_scale = 1.0;
    TrainHistory history;
    std::size_t n_train = 0;
};

struct PointModel {
    Network net;
    AffineScaler scaler;
    std::vector<std::string> features;
    double target_scale = 1.0;
    TrainHistory history;
    std::size_t n_train = 0;
};

struct SequenceModel {
    Network net;
    AffineScaler scaler;
    std::vector<std::string> features;
    SliceConfig slices;
    double target_scale = 1.0;
    TrainHistory history;
    std::size_t n_train = 0;  // slices kept for training
};

// One distribution network on explicit feature rows (callers split by pool).
DistModel train_dist_net(const std::vector<std::vector<double>>& rows,
                         const std::vector<double>& obs, Family family, const NetSpec& spec,
                         const std::vector<std::string>& feature_names, bool standardize,
                         double target_scale, std::uint64_t seed);
Distribution dist_predict(const DistModel& m, const std::vector<double>& row);

PointModel train_point_net(const std::vector<std::vector<double>>& rows,
                           const std::vector<double>& obs, const NetSpec& spec, Loss loss,
                           const std::vector<std::string>& feature_names, bool standardize,
                           double target_scale, std::uint64_t seed);
std::vector<double> point_predict(const PointModel& m,
                                  const std::vector<std::vector<double>>& rows);

// Sequence-to-sequence trainer over per-location series; slices are pooled
// across the given series.
SequenceModel train_sequence_net(const std::vector<LocationSeries>& series, const NetSpec& spec,
                                 Loss loss, const SliceConfig& slices,
                                 const std::vector<std::string>& feature_names, bool standardize,
                                 double target_scale, std::uint64_t seed);
// Per-point corrected forecasts for one series via disjoint slices.
std::vector<double> sequence_predict(const SequenceModel& m,
                                     const std::vector<std::vector<double>>& features);

// ----- artifacts -------------------------------------------------------------

struct Artifact {
    std::string path;  // relative to the model root: <method-dir>/<scope>/<date>/<pool>.json
    nlohmann::json doc;
    std::int64_t valid_date = 0;  // the date this model predicts (window ends the day before)
    std::string scope;
};

// "emos-tn", "mlp-s-cn0", ... (directory name under the model root)
std::string method_dir_name(Method m, Family f);

// Everything trained for one (valid date, scope) task of cfg.method.
// scope is a station id for local windows, "regional" otherwise.
std::vector<Artifact> train_method_scope(const Dataset& data, std::int64_t valid_date,
                                         const std::string& scope, const MethodConfig& cfg);

// scopes a config trains/predicts per date: stations or {"regional"}
std::vector<std::string> scopes_for(const Dataset& data, const WindowConfig& cfg);

std::uint64_t config_hash(const MethodConfig& cfg, std::int64_t valid_date,
                          const std::string& scope);

struct ManifestEntry {
    std::string path;
    std::uint64_t hash = 0;
};
nlohmann::json manifest_to_json(const MethodConfig& cfg, std::vector<ManifestEntry> entries);

// Writes each artifact under model_root, creating directories as needed.
void write_artifacts(const std::string& model_root, const std::vector<Artifact>& artifacts);

// Distinct init dates present in the data, ascending.
std::vector<std::int64_t> init_dates(const Dataset& data);

struct TrainRunResult {
    std::vector<Artifact> artifacts;    // task order: date-major, then scope
    std::vector<std::string> skipped;   // "<date> <scope>: reason" per skipped task
};

// Trains cfg.method for every (valid date, scope) task on a small thread pool.
// Tasks whose window lacks data are skipped and reported; any other failure
// propagates. Results are deterministic for a fixed config regardless of the
// worker count.
TrainRunResult train_dates(const Dataset& data, const MethodConfig& cfg,
                           const std::vector<std::int64_t>& valid_dates, int workers);

// ----- prediction ------------------------------------------------------------

struct CalibratedForecast {
    std::string station;
    std::int64_t init_time = 0;
    std::int64_t lead_minutes = 0;
    Family family = Family::tn;
    Distribution dist;
    std::optional<double> aux_mlp;  // corrected point forecasts (extended method)
    std::optional<double> aux_c1d;
};

// Calibrates raw forecasts with the artifacts under model_root. Forecasts are
// grouped per (station, init date); the artifact for each group is resolved
// by scope and date, and the extended method requires complete runs (its
// sequence auxiliary slices a full day). Missing artifacts raise io_error
// naming the expected path.
std::vector<CalibratedForecast> predict_forecasts(const std::vector<EnsembleForecast>& forecasts,
                                                  const MethodConfig& cfg,
                                                  const std::string& model_root);

// predictions csv: station,init_time,lead_minutes,family,param1,param2,aux_mlp,aux_c1d
void write_predictions_csv(std::ostream& out, const std::vector<CalibratedForecast>& preds);
void write_predictions_csv(const std::string& path, const std::vector<CalibratedForecast>& preds);
std::vector<CalibratedForecast> read_predictions_csv(const std::string& path);

// Predictions matched to dataset cases by (station, init, lead), reordered to
// case order. Every prediction must match exactly one case; verification then
// runs on the sub-dataset the predictions cover.
struct AlignedPredictions {
    std::vector<std::size_t> case_idx;  // ascending indices into data.cases
    std::vector<Distribution> dists;    // parallel to case_idx
};
AlignedPredictions align_predictions(const Dataset& data,
                                     const std::vector<CalibratedForecast>& preds);

// The sub-dataset holding exactly the cases at idx (ascending, no duplicates).
Dataset subset_dataset(const Dataset& data, const std::vector<std::size_t>& idx);

}  // namespace enscal
