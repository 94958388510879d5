#pragma once

#include "neurochain/spike.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace neurochain {

struct ChannelPair {
    std::uint32_t a = 0;
    std::uint32_t b = 0;
    friend bool operator==(const ChannelPair&, const ChannelPair&) = default;
};

/// Per-finger forecasting model. The predicted position increment per output
/// step is
///
///   dy = sum_i w_i * max(0, rate_i - theta_i) + sum_p v_p * sync_p + h * avg_var + b
///
/// where rate_i is the firing rate of channel i over the last `bin_width`
/// seconds, sync_p the coincidence measure of pair p over the same window and
/// avg_var the mean per-step position change over the last `depth` steps.
struct DecoderParams {
    Eigen::VectorXd weights;     // mm per Hz, one per channel
    Eigen::VectorXd thresholds;  // Hz, one per channel
    std::vector<ChannelPair> pairs;
    Eigen::VectorXd sync_weights;  // mm per unit synchrony, one per pair
    double bias = 0.0;             // mm per step
    double history_weight = 0.0;
    int depth = 10;             // M, steps
    double bin_width = 0.1;     // s
    double sync_delta = 0.002;  // s
    double rate_hz = 500.0;
    double range_min = 0.0;
    double range_max = 20.0;

    std::uint32_t channel_count() const { return static_cast<std::uint32_t>(weights.size()); }
    /// Throws ConfigError when dimensions or settings are inconsistent.
    void validate() const;
    /// Steps at the start of a run that hold the initial position.
    std::int64_t warmup_steps() const;

    void save(std::ostream& out) const;
    static DecoderParams load(std::istream& in);
    static DecoderParams load_file(const std::string& path);
};

struct FeatureVector {
    Eigen::VectorXd rates;  // rectified, >= 0
    Eigen::VectorXd sync;
    double variation = 0.0;

    /// [rates, sync, variation, 1]: the regression row used by fit.
    Eigen::VectorXd stacked() const;
};

/// Features at time `t`. `past` holds the last depth+1 positions, oldest first.
FeatureVector features(std::span<const SpikeTrain> trains, double t, std::span<const double> past,
                       const DecoderParams& params);

/// Throws ConfigError on dimension mismatch.
double predict_delta(const DecoderParams& params, const FeatureVector& f);

/// Free-running integration state: current position plus the ring of the
/// last depth+1 positions.
class DecoderState {
public:
    DecoderState(const DecoderParams& params, double initial_mm);

    double position() const { return position_; }
    /// Oldest first.
    std::span<const double> history() const { return history_; }
    /// Pushes a position without predicting (warm-up, teacher forcing).
    void hold(double position_mm);

private:
    friend double step(DecoderState&, const DecoderParams&, const FeatureVector&);
    double position_;
    std::vector<double> history_;
};

/// Advances one output step; returns the new clamped position.
double step(DecoderState& state, const DecoderParams& params, const FeatureVector& f);

/// Distance between fingers, flexion positive.
inline double aperture(double index_mm, double thumb_mm) { return index_mm + thumb_mm; }

struct ThresholdRule {
    double percentile = 20.0;
    /// Explicit thresholds override the percentile rule.
    std::optional<std::vector<double>> fixed;
};

struct FitConfig {
    double bin_width = 0.1;
    int depth = 10;
    double sync_delta = 0.002;
    /// Used when `pairs` is not given: the highest-rate channel pairs.
    std::size_t pair_count = 32;
    std::optional<std::vector<ChannelPair>> pairs;
    double ridge = 0.0;
    ThresholdRule thresholds;
    double range_min = 0.0;
    double range_max = 20.0;
};

struct FitReport {
    std::size_t rows = 0;
    double train_rmse_delta = 0.0;
    /// max |X^T r - ridge * D * beta| relative to max |X^T y|.
    double normal_residual = 0.0;
};

/// Ridge regression of the per-step increments of `target` on teacher-forced
/// features. Throws SingularityError when the design is rank deficient and
/// ridge == 0.
DecoderParams fit(std::span<const SpikeTrain> trains, const FingerTrajectory& target, const FitConfig& config,
                  FitReport* report = nullptr);

/// Default pair set: the `count` pairs with the largest product of mean rates
/// over [t0, t1), ties broken by channel ids.
std::vector<ChannelPair> top_rate_pairs(std::span<const SpikeTrain> trains, double t0, double t1, std::size_t count);

/// Percentile thresholds from rates binned at `bin_width` over [t0, t1).
std::vector<double> percentile_thresholds(std::span<const SpikeTrain> trains, double t0, double t1,
                                          double bin_width, double q);

/// Free-running prediction of `count` samples starting at sample `first_index`.
FingerTrajectory replay(const DecoderParams& params, std::span<const SpikeTrain> trains, std::int64_t first_index,
                        std::size_t count, double initial_mm);

/// Streaming decoder: spikes arrive in blocks, positions are produced per
/// sample index. Only the last bin_width seconds of spikes are retained.
class OnlineDecoder {
public:
    OnlineDecoder(DecoderParams params, std::int64_t first_index, double initial_mm);

    const DecoderParams& params() const { return params_; }
    void push(const SpikeBlock& block);
    /// Produces the positions of samples [next_index(), end_index); every spike
    /// before the last sample's time must have been pushed.
    std::vector<double> advance_to(std::int64_t end_index);
    std::int64_t next_index() const { return next_; }

private:
    DecoderParams params_;
    std::vector<SpikeTrain> buffers_;
    DecoderState state_;
    std::int64_t first_;
    std::int64_t next_;
    double initial_;
};

struct TrajectoryMetrics {
    double rmse_mm = 0.0;
    double correlation = 0.0;
};

/// Throws MetricError for mismatched or zero-variance inputs.
TrajectoryMetrics evaluate(const FingerTrajectory& predicted, const FingerTrajectory& actual);

}  // namespace neurochain
