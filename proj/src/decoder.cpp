#include "neurochain/decoder.hpp"

#include "neurochain/errors.hpp"
#include "neurochain/kvconfig.hpp"
#include "neurochain/stats.hpp"
#include "text.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>

namespace neurochain {

namespace {

constexpr std::string_view kParamsHeader = "neurochain-params v1";

std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

Eigen::VectorXd to_eigen(const std::vector<double>& v) {
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

// ---------------------------------------------------------------------------
// DecoderParams

void DecoderParams::validate() const {
    if (thresholds.size() != weights.size()) throw ConfigError("decoder: thresholds and weights differ in length");
    if (sync_weights.size() != static_cast<Eigen::Index>(pairs.size()))
        throw ConfigError("decoder: sync weights and pair set differ in length");
    for (const auto& p : pairs)
        if (p.a >= channel_count() || p.b >= channel_count() || p.a == p.b)
            throw ConfigError("decoder: invalid channel pair " + std::to_string(p.a) + ":" + std::to_string(p.b));
    if (depth < 1) throw ConfigError("decoder: depth must be >= 1");
    if (!(bin_width > 0.0)) throw ConfigError("decoder: bin width must be > 0");
    if (!(sync_delta >= 0.0)) throw ConfigError("decoder: sync delta must be >= 0");
    if (!(rate_hz > 0.0)) throw ConfigError("decoder: output rate must be > 0");
    if (!(range_min <= range_max)) throw ConfigError("decoder: empty position range");
}

std::int64_t DecoderParams::warmup_steps() const {
    const double span = std::max(bin_width, static_cast<double>(depth + 1) / rate_hz);
    return static_cast<std::int64_t>(std::ceil(span * rate_hz - 1e-9));
}

void DecoderParams::save(std::ostream& out) const {
    validate();
    KeyValueDoc doc;
    doc.set("channels", std::to_string(channel_count()));
    doc.set("weights", to_std(weights));
    doc.set("thresholds", to_std(thresholds));
    std::string ps;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        if (i) ps += ' ';
        ps += std::to_string(pairs[i].a) + ":" + std::to_string(pairs[i].b);
    }
    doc.set("pairs", ps);
    doc.set("sync_weights", to_std(sync_weights));
    doc.set("bias", bias);
    doc.set("history_weight", history_weight);
    doc.set("depth", std::to_string(depth));
    doc.set("bin_width", bin_width);
    doc.set("sync_delta", sync_delta);
    doc.set("rate_hz", rate_hz);
    doc.set("range_min", range_min);
    doc.set("range_max", range_max);
    doc.write(out, kParamsHeader);
}

DecoderParams DecoderParams::load(std::istream& in) {
    const auto doc = KeyValueDoc::parse(in, kParamsHeader);
    DecoderParams p;
    const auto channels = doc.integer("channels");
    p.weights = to_eigen(doc.numbers("weights"));
    p.thresholds = to_eigen(doc.numbers("thresholds"));
    if (p.weights.size() != channels) throw ConfigError("params: `weights` length differs from `channels`");
    for (const auto& w : doc.words("pairs")) {
        auto colon = w.find(':');
        auto a = colon == std::string::npos ? std::nullopt : text::parse_uint(std::string_view(w).substr(0, colon));
        auto b = colon == std::string::npos ? std::nullopt : text::parse_uint(std::string_view(w).substr(colon + 1));
        if (!a || !b) throw ConfigError("params: malformed pair `" + w + "`");
        p.pairs.push_back({static_cast<std::uint32_t>(*a), static_cast<std::uint32_t>(*b)});
    }
    p.sync_weights = to_eigen(doc.numbers("sync_weights"));
    p.bias = doc.number("bias");
    p.history_weight = doc.number("history_weight");
    p.depth = static_cast<int>(doc.integer("depth"));
    p.bin_width = doc.number("bin_width");
    p.sync_delta = doc.number("sync_delta");
    p.rate_hz = doc.number("rate_hz");
    p.range_min = doc.number("range_min");
    p.range_max = doc.number("range_max");
    p.validate();
    return p;
}

DecoderParams DecoderParams::load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open params file " + path);
    return load(in);
}

// ---------------------------------------------------------------------------
// Features and prediction

Eigen::VectorXd FeatureVector::stacked() const {
    Eigen::VectorXd x(rates.size() + sync.size() + 2);
    x << rates, sync, variation, 1.0;
    return x;
}

FeatureVector features(std::span<const SpikeTrain> trains, double t, std::span<const double> past,
                       const DecoderParams& params) {
    const auto C = params.channel_count();
    if (trains.size() != C) throw ConfigError("decoder expects " + std::to_string(C) + " channels, stream has " +
                                              std::to_string(trains.size()));
    if (past.size() != static_cast<std::size_t>(params.depth) + 1)
        throw ConfigError("decoder: position history must hold depth + 1 samples");
    FeatureVector f;
    f.rates.resize(C);
    for (std::uint32_t i = 0; i < C; ++i)
        f.rates[i] = std::max(0.0, firing_rate(trains[i], t, params.bin_width) - params.thresholds[i]);
    f.sync.resize(static_cast<Eigen::Index>(params.pairs.size()));
    for (std::size_t p = 0; p < params.pairs.size(); ++p) {
        const auto& pr = params.pairs[p];
        f.sync[static_cast<Eigen::Index>(p)] =
            synchrony(trains[pr.a], trains[pr.b], t, params.bin_width, params.sync_delta);
    }
    f.variation = (past.back() - past.front()) / static_cast<double>(params.depth);
    return f;
}

double predict_delta(const DecoderParams& params, const FeatureVector& f) {
    if (f.rates.size() != params.weights.size() || f.sync.size() != params.sync_weights.size())
        throw ConfigError("feature vector does not match decoder dimensions");
    return params.weights.dot(f.rates) + params.sync_weights.dot(f.sync) + params.history_weight * f.variation +
           params.bias;
}

DecoderState::DecoderState(const DecoderParams& params, double initial_mm)
    : position_(initial_mm), history_(static_cast<std::size_t>(params.depth) + 1, initial_mm) {}

void DecoderState::hold(double position_mm) {
    std::rotate(history_.begin(), history_.begin() + 1, history_.end());
    history_.back() = position_mm;
    position_ = position_mm;
}

double step(DecoderState& state, const DecoderParams& params, const FeatureVector& f) {
    const double y = std::clamp(state.position_ + predict_delta(params, f), params.range_min, params.range_max);
    state.hold(y);
    return y;
}

namespace {

// One output sample of a run, shared by the offline and streaming paths so both
// evaluate in the same order.
double decode_sample(std::span<const SpikeTrain> trains, std::int64_t index, std::int64_t steps_into_run,
                     DecoderState& state, const DecoderParams& params, double initial) {
    if (steps_into_run < params.warmup_steps()) {
        state.hold(initial);
        return initial;
    }
    const auto f = features(trains, sample_time(index, params.rate_hz), state.history(), params);
    return step(state, params, f);
}

}  // namespace

FingerTrajectory replay(const DecoderParams& params, std::span<const SpikeTrain> trains, std::int64_t first_index,
                        std::size_t count, double initial_mm) {
    params.validate();
    FingerTrajectory out{first_index, params.rate_hz, {}};
    out.positions_mm.reserve(count);
    DecoderState state(params, initial_mm);
    for (std::size_t k = 0; k < count; ++k) {
        const auto idx = first_index + static_cast<std::int64_t>(k);
        out.positions_mm.push_back(
            decode_sample(trains, idx, static_cast<std::int64_t>(k), state, params, initial_mm));
    }
    return out;
}

OnlineDecoder::OnlineDecoder(DecoderParams params, std::int64_t first_index, double initial_mm)
    : params_(std::move(params)), state_(params_, initial_mm), first_(first_index), next_(first_index),
      initial_(initial_mm) {
    params_.validate();
    buffers_.reserve(params_.channel_count());
    for (std::uint32_t c = 0; c < params_.channel_count(); ++c) buffers_.emplace_back(c, std::vector<SpikeTimestamp>{});
}

void OnlineDecoder::push(const SpikeBlock& block) {
    for (const auto& ev : block.events) {
        if (ev.channel >= buffers_.size())
            throw ConfigError("spike channel " + std::to_string(ev.channel) + " outside decoder channel count " +
                              std::to_string(buffers_.size()));
        buffers_[ev.channel].push_back(ev.time);
    }
}

std::vector<double> OnlineDecoder::advance_to(std::int64_t end_index) {
    std::vector<double> out;
    if (end_index <= next_) return out;
    out.reserve(static_cast<std::size_t>(end_index - next_));
    for (; next_ < end_index; ++next_)
        out.push_back(decode_sample(buffers_, next_, next_ - first_, state_, params_, initial_));
    const double keep_from = sample_time(next_, params_.rate_hz) - params_.bin_width;
    for (auto& b : buffers_) b.discard_before(keep_from);
    return out;
}

// ---------------------------------------------------------------------------
// Fitting

std::vector<ChannelPair> top_rate_pairs(std::span<const SpikeTrain> trains, double t0, double t1, std::size_t count) {
    std::vector<double> counts(trains.size());
    for (std::size_t i = 0; i < trains.size(); ++i) counts[i] = static_cast<double>(trains[i].count_in(t0, t1));
    struct Scored {
        double score;
        ChannelPair pair;
    };
    std::vector<Scored> all;
    for (std::uint32_t a = 0; a < trains.size(); ++a)
        for (std::uint32_t b = a + 1; b < trains.size(); ++b) all.push_back({counts[a] * counts[b], {a, b}});
    std::stable_sort(all.begin(), all.end(), [](const Scored& x, const Scored& y) { return x.score > y.score; });
    std::vector<ChannelPair> out;
    for (std::size_t i = 0; i < std::min(count, all.size()); ++i) out.push_back(all[i].pair);
    return out;
}

std::vector<double> percentile_thresholds(std::span<const SpikeTrain> trains, double t0, double t1, double bin_width,
                                          double q) {
    std::vector<double> out;
    out.reserve(trains.size());
    for (const auto& tr : trains) {
        const auto counts = bin_counts(tr, t0, t1, bin_width);
        Eigen::VectorXd rates(static_cast<Eigen::Index>(counts.size()));
        for (std::size_t k = 0; k < counts.size(); ++k)
            rates[static_cast<Eigen::Index>(k)] = static_cast<double>(counts[k]) / bin_width;
        out.push_back(percentile(rates, q));
    }
    return out;
}

DecoderParams fit(std::span<const SpikeTrain> trains, const FingerTrajectory& target, const FitConfig& config,
                  FitReport* report) {
    DecoderParams params;
    const auto C = static_cast<std::uint32_t>(trains.size());
    params.bin_width = config.bin_width;
    params.depth = config.depth;
    params.sync_delta = config.sync_delta;
    params.rate_hz = target.rate_hz;
    params.range_min = config.range_min;
    params.range_max = config.range_max;
    if (!(config.ridge >= 0.0)) throw ConfigError("ridge strength must be >= 0");

    const double t0 = target.start_s();
    const double t1 = sample_time(target.first_index + static_cast<std::int64_t>(target.size()), target.rate_hz);
    if (t1 - t0 < 10.0 - 1e-9) throw ConfigError("fit needs at least 10 s of common data");

    if (config.thresholds.fixed) {
        if (config.thresholds.fixed->size() != C) throw ConfigError("fixed thresholds do not match channel count");
        params.thresholds = to_eigen(*config.thresholds.fixed);
    } else {
        params.thresholds = to_eigen(percentile_thresholds(trains, t0, t1, config.bin_width, config.thresholds.percentile));
    }
    params.pairs = config.pairs ? *config.pairs : top_rate_pairs(trains, t0, t1, config.pair_count);
    params.weights = Eigen::VectorXd::Zero(C);
    params.sync_weights = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(params.pairs.size()));
    params.validate();

    const Eigen::Index n = C + static_cast<Eigen::Index>(params.pairs.size()) + 2;
    const auto warm = static_cast<std::size_t>(params.warmup_steps());
    const auto& y = target.positions_mm;
    if (y.size() <= warm) throw ConfigError("target shorter than the decoder warm-up");

    Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(n, n);
    Eigen::VectorXd xty = Eigen::VectorXd::Zero(n);
    double yty = 0.0;
    constexpr Eigen::Index kBatch = 2048;
    Eigen::MatrixXd rows(kBatch, n);
    Eigen::VectorXd rhs(kBatch);
    Eigen::Index filled = 0;
    auto flush = [&] {
        if (filled == 0) return;
        const auto X = rows.topRows(filled);
        gram.selfadjointView<Eigen::Lower>().rankUpdate(X.transpose());
        xty.noalias() += X.transpose() * rhs.head(filled);
        yty += rhs.head(filled).squaredNorm();
        filled = 0;
    };
    const auto M = static_cast<std::size_t>(params.depth);
    for (std::size_t k = warm; k < y.size(); ++k) {
        std::span<const double> past(y.data() + (k - 1 - M), M + 1);
        const auto idx = target.first_index + static_cast<std::int64_t>(k);
        rows.row(filled) = features(trains, sample_time(idx, params.rate_hz), past, params).stacked().transpose();
        rhs[filled] = y[k] - y[k - 1];
        if (++filled == kBatch) flush();
    }
    flush();
    gram = gram.selfadjointView<Eigen::Lower>();

    Eigen::VectorXd penalty = Eigen::VectorXd::Constant(n, config.ridge);
    penalty[n - 1] = 0.0;  // bias is not regularised
    Eigen::MatrixXd system = gram;
    system.diagonal() += penalty;

    // Jacobi equilibration keeps rates (tens of Hz) and per-step variations
    // (fractions of a mm) on the same footing.
    Eigen::VectorXd scale = system.diagonal().cwiseSqrt();
    for (Eigen::Index j = 0; j < n; ++j)
        if (!(scale[j] > 0.0)) scale[j] = 1.0;
    const Eigen::VectorXd inv = scale.cwiseInverse();
    const Eigen::MatrixXd scaled = inv.asDiagonal() * system * inv.asDiagonal();

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(scaled);
    qr.setThreshold(1e-12);
    if (qr.rank() < n) {
        if (config.ridge == 0.0)
            throw SingularityError("design matrix is rank deficient (rank " + std::to_string(qr.rank()) + " of " +
                                   std::to_string(n) + "); use a ridge strength > 0");
    }
    Eigen::VectorXd beta = inv.asDiagonal() * qr.solve(inv.asDiagonal() * xty);
    // One step of iterative refinement against the unscaled system.
    const Eigen::VectorXd resid = xty - system * beta;
    beta += inv.asDiagonal() * qr.solve(inv.asDiagonal() * resid);

    params.weights = beta.head(C);
    params.sync_weights = beta.segment(C, static_cast<Eigen::Index>(params.pairs.size()));
    params.history_weight = beta[n - 2];
    params.bias = beta[n - 1];

    if (report) {
        const auto rows_used = y.size() - warm;
        report->rows = rows_used;
        const double sse = std::max(0.0, yty - 2.0 * beta.dot(xty) + beta.dot(gram * beta));
        report->train_rmse_delta = std::sqrt(sse / static_cast<double>(rows_used));
        const Eigen::VectorXd normal = xty - system * beta;
        const double ref = std::max(xty.cwiseAbs().maxCoeff(), 1e-300);
        report->normal_residual = normal.cwiseAbs().maxCoeff() / ref;
    }
    return params;
}

TrajectoryMetrics evaluate(const FingerTrajectory& predicted, const FingerTrajectory& actual) {
    if (predicted.size() != actual.size() || predicted.size() < 2)
        throw MetricError("evaluate needs trajectories of equal length >= 2");
    if (predicted.rate_hz != actual.rate_hz || predicted.first_index != actual.first_index)
        throw MetricError("evaluate needs trajectories on the same sampling grid");
    const auto n = static_cast<Eigen::Index>(predicted.size());
    Eigen::Map<const Eigen::VectorXd> p(predicted.positions_mm.data(), n);
    Eigen::Map<const Eigen::VectorXd> a(actual.positions_mm.data(), n);
    return {rmse(p, a), pearson(p, a)};
}

}  // namespace neurochain
