#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "hsml/bench.hpp"
#include "hsml/common.hpp"
#include "hsml/fem.hpp"
#include "hsml/mesh.hpp"

namespace hsml::pinn {

// gated two-encoder variant (the default) or a plain tanh chain
enum class Architecture { residual_ff, mlp };

// One scalar- or vector-output network. Weights pack in a fixed order:
// encoders (U then V, gated only), hidden layers, linear output layer;
// each block row-major W then b. The gated variant needs equal hidden widths.
struct Network {
    std::vector<int> layer_sizes;  // [input, hidden..., output]
    Architecture arch = Architecture::residual_ff;
    std::vector<double> weights;
};

// Output transform u_hat = t0 + t * u_net: the value at t = 0 is t0 for any
// weights, so the initial condition is structural instead of learned.
struct HardConstraint {
    bool active = false;
    double t0 = 0.0;
};

// A trainable field approximation: one network per solution component by
// default (or one multi-output network), plus named physical parameters
// shared across components. Each parameter joins the optimization vector
// exactly once when train_params is set.
struct PinnModel {
    std::vector<Network> nets;
    std::vector<std::string> param_names;
    std::vector<double> param_values;
    bool train_params = false;
    HardConstraint hard;

    int input_dim() const;
    int components() const;
};

std::size_t network_weight_count(const std::vector<int>& layer_sizes, Architecture arch);

// Glorot-uniform weights from the seed, zero biases. input_dim is 3 or 4
// (space, or space plus time); single_net puts all components on one network.
PinnModel make_model(int input_dim, const std::vector<int>& hidden, int components, Architecture arch,
                     std::uint64_t seed, bool single_net = false);

void set_parameters(PinnModel& model, const std::vector<std::string>& names, const std::vector<double>& values,
                    bool trainable);

// Plain matrix-arithmetic forward pass; t is ignored for 3-input models.
Eigen::VectorXd forward(const PinnModel& model, const Vec3& p, double t = 0.0);

struct Observations {
    std::vector<Vec3> points;
    std::vector<double> times;  // empty for steady problems
    Eigen::MatrixXd values;     // row per point, column per component
};

struct TrainConfig {
    int epochs = 1000;
    int batch_size = 0;  // collocation batch per epoch, 0 = full batch
    double learning_rate = 1e-3;
    double decay_rate = 0.0;  // lr at epoch e: learning_rate * (1 - decay_rate)^e
    bool swa = false;         // average every 10th epoch over the final quarter
    bool rba = true;          // residual-based attention on collocation points
    double rba_gamma = 0.999;
    double rba_eta = 0.01;
    double w_residual = 1.0;
    double w_data = 0.0;
    std::uint64_t seed = 0;
    // expected point counts; zero skips the consistency check for that set
    int collocation = 0;
    int boundary = 0;
    int initial = 0;
    int data = 0;
};

struct LossBreakdown {
    double residual = 0.0;
    double boundary = 0.0;
    double initial = 0.0;
    double data = 0.0;
    double w_residual = 1.0;
    double w_data = 0.0;
    std::vector<double> rba;  // collocation multipliers; filled on the final epoch record

    double total() const { return w_residual * (residual + boundary + initial) + w_data * data; }
};

// Mean squared PDE residual over the points with the model's current
// parameter values; per_point (optional) receives each point's residual
// magnitude across components.
double residual_loss(const PinnModel& model, const std::string& problem_id,
                     const std::vector<mesh::SamplePoint>& points, std::vector<double>* per_point = nullptr);

// Full-batch loss with unit attention multipliers. Steady problems and
// hard-constrained models have no initial term; data may be null when
// w_data is zero.
LossBreakdown total_loss(const PinnModel& model, const std::string& problem_id, const mesh::SamplePlan& plan,
                         const Observations* data, double w_residual, double w_data);

struct TrainResult {
    PinnModel model;
    std::vector<LossBreakdown> history;              // one entry per epoch
    std::vector<std::vector<double>> param_history;  // per epoch, when parameters train
};

// Adam on all weights (physical parameters included when trainable), with
// exponential learning-rate decay, lag-one residual-based attention (the
// multipliers updated from this epoch's residuals weight the next epoch),
// and optional stochastic weight averaging. Aborts on a non-finite loss,
// naming the epoch.
TrainResult train(const PinnModel& model, const std::string& problem_id, const TrainConfig& config,
                  const mesh::SamplePlan& plan, const Observations* data = nullptr);

struct InverseResult {
    std::vector<std::string> names;
    std::vector<double> estimates;
    std::vector<double> reference;   // empty when no reference was supplied
    std::vector<double> rel_error;   // absolute where the reference entry is 0
    std::vector<bool> identifiable;  // loss-sensitivity probe per parameter
    TrainResult training;
};

// Wraps train with lambda/alpha/beta trainable from the midpoint of the
// parameter box. The first tenth of the epoch budget trains the network
// alone so the parameter gradients start from a settled state; training in
// the result covers the joint phase. A parameter is flagged non-identifiable
// when the total loss is insensitive to perturbing it around the estimate.
InverseResult identify_parameters(const PinnModel& model, const std::string& problem_id,
                                  const mesh::SamplePlan& plan, const Observations& data,
                                  const TrainConfig& config, const Vec3* reference = nullptr);

// network output at every mesh node for each requested time
fem::FieldSeries evaluate_on_mesh(const PinnModel& model, const mesh::VolumeMesh& mesh,
                                  const std::vector<double>& times);

// Noise-free samples of the analytic solution at mu, placed on the domain
// boundary (simulated surface sensors); unsteady problems draw observation
// times uniformly over the horizon. When time_instants >= 2, each drawn time
// snaps to the uniform grid with that many instants, emulating a logger that
// only reports on its own clock.
Observations synthetic_observations(const std::string& problem_id, const Vec3& mu, int count, std::uint64_t seed,
                                    int time_instants = 0);

// Sensor fixture rows flattened to observations; the t = 0 instant is
// dropped because the hard constraint pins it.
Observations sensor_observations(const bench::SensorFixture& fixture);

struct Preset {
    TrainConfig config;
    std::vector<int> hidden;
    Architecture arch = Architecture::residual_ff;
};

// keys: tp1, tp2, tp3, tp4-physics, tp4-data
Preset reference_preset(const std::string& key);  // hyperparameters as published
Preset desk_preset(const std::string& key);   // re-baselined for one CPU core

void save_model(const std::string& path, const PinnModel& model);
PinnModel load_model(const std::string& path);

// Run directory: config (key-value), loss_history.csv, param_history.csv
// (when parameters trained), model.bin, estimates (parameter table).
void save_run(const std::string& dir, const PinnModel& model, const TrainConfig& config, const TrainResult& result,
              const InverseResult* inverse = nullptr);

}  // namespace hsml::pinn
