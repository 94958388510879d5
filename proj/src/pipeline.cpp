#include "neurochain/pipeline.hpp"

#include "neurochain/client.hpp"
#include "neurochain/decoder.hpp"
#include "neurochain/errors.hpp"
#include "text.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <set>
#include <thread>
#include <variant>

namespace neurochain {

namespace {

enum class PortType { Spikes, Signal };

struct KindInfo {
    std::vector<std::pair<std::string, PortType>> inputs;
    std::vector<std::pair<std::string, PortType>> outputs;
    std::set<std::string> settings;
};

const std::map<std::string, KindInfo>& kinds() {
    using P = PortType;
    static const std::map<std::string, KindInfo> table = {
        {"CsvReader", {{}, {{"out", P::Spikes}}, {"file", "channels", "duration_s"}}},
        {"ChannelSelector", {{{"in", P::Spikes}}, {{"out", P::Spikes}}, {"channels"}}},
        {"DecoderBox", {{{"in", P::Spikes}}, {{"out", P::Signal}}, {"params", "initial_mm"}}},
        {"Adder", {{{"a", P::Signal}, {"b", P::Signal}}, {{"out", P::Signal}}, {}}},
        {"Printer", {{{"in", P::Signal}}, {}, {"file", "label"}}},
        {"NetClient", {{{"in", P::Signal}}, {}, {"addr", "timeout_ms", "poll"}}},
        {"TraceSink", {{{"index", P::Signal}, {"thumb", P::Signal}}, {}, {"file"}}},
    };
    return table;
}

std::optional<PortType> port_type(const std::vector<std::pair<std::string, PortType>>& ports, const std::string& name) {
    for (const auto& [n, t] : ports)
        if (n == name) return t;
    return std::nullopt;
}

bool valid_id(std::string_view id) {
    return !id.empty() && std::all_of(id.begin(), id.end(), [](char c) {
        return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-';
    });
}

std::string substitute(std::string_view line, const std::map<std::string, std::string>& vars, std::size_t lineno) {
    std::string out;
    std::size_t i = 0;
    while (i < line.size()) {
        if (line[i] == '$' && i + 1 < line.size() && line[i + 1] == '{') {
            auto close = line.find('}', i + 2);
            if (close == std::string_view::npos) throw ParseError("unterminated ${", lineno);
            const std::string name(line.substr(i + 2, close - i - 2));
            auto it = vars.find(name);
            if (it == vars.end()) throw ConfigError("line " + std::to_string(lineno) + ": undefined variable ${" + name + "}");
            out += it->second;
            i = close + 1;
        } else {
            out += line[i++];
        }
    }
    return out;
}

std::pair<std::string, std::string> split_port(std::string_view ref, std::size_t lineno) {
    auto dot = ref.find('.');
    if (dot == std::string_view::npos || dot == 0 || dot + 1 == ref.size())
        throw ParseError("expected <box>.<port>, got `" + std::string(ref) + "`", lineno);
    return {std::string(ref.substr(0, dot)), std::string(ref.substr(dot + 1))};
}

}  // namespace

// ---------------------------------------------------------------------------
// Graph

ScenarioGraph ScenarioGraph::parse(std::istream& in, const std::map<std::string, std::string>& vars_in) {
    ScenarioGraph g;
    auto vars = vars_in;
    std::map<std::string, std::size_t> index;
    std::string raw;
    std::size_t lineno = 0;
    while (std::getline(in, raw)) {
        ++lineno;
        auto trimmed = text::trim(raw);
        if (trimmed.empty() || trimmed.front() == '#') continue;
        if (trimmed.rfind("var ", 0) == 0) {
            auto eq = trimmed.find('=');
            if (eq == std::string_view::npos) throw ParseError("expected `var name = value`", lineno);
            const std::string name(text::trim(trimmed.substr(4, eq - 4)));
            if (!valid_id(name)) throw ParseError("bad variable name", lineno);
            vars.try_emplace(name, std::string(text::trim(trimmed.substr(eq + 1))));
            continue;
        }
        const std::string line = substitute(trimmed, vars, lineno);
        const auto tok = text::tokens(line);
        if (tok[0] == "box") {
            if (tok.size() < 3) throw ParseError("expected `box <id> <kind> key=value...`", lineno);
            BoxSpec b{std::string(tok[1]), std::string(tok[2]), {}};
            if (!valid_id(b.id)) throw ParseError("bad box id `" + b.id + "`", lineno);
            auto kind = kinds().find(b.kind);
            if (kind == kinds().end()) throw ConfigError("line " + std::to_string(lineno) + ": unknown box kind `" + b.kind + "`");
            for (std::size_t i = 3; i < tok.size(); ++i) {
                auto eq = tok[i].find('=');
                if (eq == std::string_view::npos || eq == 0) throw ParseError("expected key=value", lineno);
                std::string key(tok[i].substr(0, eq));
                if (!kind->second.settings.count(key))
                    throw ConfigError("line " + std::to_string(lineno) + ": " + b.kind + " has no setting `" + key + "`");
                b.settings[key] = std::string(tok[i].substr(eq + 1));
            }
            if (!index.emplace(b.id, g.boxes_.size()).second)
                throw ConfigError("line " + std::to_string(lineno) + ": duplicate box id `" + b.id + "`");
            g.boxes_.push_back(std::move(b));
        } else if (tok[0] == "link") {
            if (tok.size() != 4 || tok[2] != "->") throw ParseError("expected `link <src>.<port> -> <dst>.<port>`", lineno);
            auto [fb, fp] = split_port(tok[1], lineno);
            auto [tb, tp] = split_port(tok[3], lineno);
            g.links_.push_back({fb, fp, tb, tp});
        } else {
            throw ParseError("unknown statement `" + std::string(tok[0]) + "`", lineno);
        }
    }

    // Links resolve to typed ports.
    const auto n = g.boxes_.size();
    std::vector<std::vector<std::size_t>> succ(n);
    std::vector<std::size_t> indegree(n, 0);
    std::map<std::pair<std::string, std::string>, std::size_t> producers;
    for (const auto& l : g.links_) {
        auto from = index.find(l.from_box);
        auto to = index.find(l.to_box);
        const std::string desc = l.from_box + "." + l.from_port + " -> " + l.to_box + "." + l.to_port;
        if (from == index.end() || to == index.end()) throw ConfigError("dangling link " + desc);
        const auto& fk = kinds().at(g.boxes_[from->second].kind);
        const auto& tk = kinds().at(g.boxes_[to->second].kind);
        auto ft = port_type(fk.outputs, l.from_port);
        auto tt = port_type(tk.inputs, l.to_port);
        if (!ft || !tt) throw ConfigError("dangling link " + desc + ": no such port");
        if (*ft != *tt) throw ConfigError("link " + desc + " connects a spike port to a signal port");
        ++producers[{l.to_box, l.to_port}];
        succ[from->second].push_back(to->second);
        ++indegree[to->second];
    }

    // Kahn's algorithm, tracking the longest path depth of every box.
    std::vector<std::size_t> depth(n, 0), ready, visited;
    auto remaining = indegree;
    for (std::size_t i = 0; i < n; ++i)
        if (remaining[i] == 0) ready.push_back(i);
    while (!ready.empty()) {
        const auto i = ready.back();
        ready.pop_back();
        visited.push_back(i);
        for (auto j : succ[i]) {
            depth[j] = std::max(depth[j], depth[i] + 1);
            if (--remaining[j] == 0) ready.push_back(j);
        }
    }
    if (visited.size() != n) {
        std::string members;
        for (std::size_t i = 0; i < n; ++i)
            if (remaining[i] > 0) members += (members.empty() ? "" : ", ") + g.boxes_[i].id;
        throw ConfigError("scenario graph has a cycle through " + members);
    }

    for (const auto& b : g.boxes_)
        for (const auto& [port, type] : kinds().at(b.kind).inputs) {
            auto c = producers[{b.id, port}];
            if (c == 0) throw ConfigError("input " + b.id + "." + port + " is not connected");
            if (c > 1) throw ConfigError("input " + b.id + "." + port + " has " + std::to_string(c) + " producers");
        }

    g.order_.resize(n);
    for (std::size_t i = 0; i < n; ++i) g.order_[i] = i;
    std::sort(g.order_.begin(), g.order_.end(), [&](std::size_t a, std::size_t b) {
        return std::tie(depth[a], g.boxes_[a].id) < std::tie(depth[b], g.boxes_[b].id);
    });
    return g;
}

const BoxSpec& ScenarioGraph::box(const std::string& id) const {
    for (const auto& b : boxes_)
        if (b.id == id) return b;
    throw ConfigError("no box `" + id + "`");
}

ScenarioGraph load_scenario(const std::string& path, const std::map<std::string, std::string>& vars) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open scenario " + path);
    return ScenarioGraph::parse(in, vars);
}

// ---------------------------------------------------------------------------
// Runtime

namespace {

struct SpikeChunk {
    SpikeBlock block;
    std::uint32_t channel_count = 0;
};

struct SignalChunk {
    std::int64_t first_index = 0;
    std::vector<double> values;
};

using Payload = std::variant<std::monostate, SpikeChunk, SignalChunk>;

struct Tick {
    std::size_t number = 0;
    std::int64_t first_index = 0;
    std::int64_t end_index = 0;
    SpikeTimestamp start;
    SpikeTimestamp end;
};

class Box {
public:
    explicit Box(const BoxSpec& spec) : spec_(spec) {}
    virtual ~Box() = default;
    virtual void process(const Tick& tick) = 0;
    virtual void finish(RunReport&) {}

    const std::string& id() const { return spec_.id; }
    std::map<std::string, Payload> outputs;
    std::map<std::string, const Payload*> inputs;

protected:
    const std::string& setting(const std::string& key) const {
        auto it = spec_.settings.find(key);
        if (it == spec_.settings.end()) throw ConfigError("missing setting `" + key + "`");
        return it->second;
    }
    std::optional<std::string> maybe(const std::string& key) const {
        auto it = spec_.settings.find(key);
        return it == spec_.settings.end() ? std::nullopt : std::optional(it->second);
    }
    double number(const std::string& key, double fallback) const {
        auto v = maybe(key);
        if (!v) return fallback;
        auto d = text::parse_double(*v);
        if (!d) throw ConfigError("setting `" + key + "` is not a number");
        return *d;
    }
    template <typename T>
    const T& input(const std::string& port) const {
        const auto* p = std::get_if<T>(inputs.at(port));
        if (!p) throw DataError("no data on input " + port);
        return *p;
    }

    BoxSpec spec_;
};

class CsvReaderBox final : public Box {
public:
    explicit CsvReaderBox(const BoxSpec& spec) : Box(spec) {
        std::ifstream in(setting("file"));
        if (!in) throw DataError("cannot open " + setting("file"));
        std::optional<std::uint32_t> declared;
        if (auto c = maybe("channels")) {
            auto v = text::parse_uint(*c);
            if (!v) throw ConfigError("setting `channels` is not a count");
            declared = static_cast<std::uint32_t>(*v);
        }
        auto rec = read_spike_csv(in, declared);
        channels_ = rec.channel_count;
        const auto trains = trains_by_channel(rec);
        events_ = merge_events(trains);
        if (auto d = maybe("duration_s")) duration_ = number("duration_s", 0.0);
    }

    /// Natural run length in seconds.
    std::optional<double> duration() const { return duration_; }
    double last_spike() const { return events_.empty() ? 0.0 : events_.back().time.seconds(); }

    void process(const Tick& tick) override {
        SpikeChunk c{{tick.start, tick.end, {}}, channels_};
        while (cursor_ < events_.size() && events_[cursor_].time < tick.start) ++cursor_;
        while (cursor_ < events_.size() && events_[cursor_].time < tick.end) c.block.events.push_back(events_[cursor_++]);
        outputs["out"] = std::move(c);
    }

private:
    std::uint32_t channels_ = 0;
    std::vector<SpikeEvent> events_;
    std::size_t cursor_ = 0;
    std::optional<double> duration_;
};

std::vector<std::uint32_t> parse_channel_list(const std::string& spec) {
    std::vector<std::uint32_t> ids;
    for (auto part : text::split(spec, ',')) {
        auto dash = part.find('-');
        auto lo = text::parse_uint(part.substr(0, dash));
        auto hi = dash == std::string_view::npos ? lo : text::parse_uint(part.substr(dash + 1));
        if (!lo || !hi || *hi < *lo) throw ConfigError("bad channel list `" + spec + "`");
        for (auto c = *lo; c <= *hi; ++c) ids.push_back(static_cast<std::uint32_t>(c));
    }
    return ids;
}

class ChannelSelectorBox final : public Box {
public:
    using Box::Box;
    void process(const Tick&) override {
        const auto& in = input<SpikeChunk>("in");
        if (!keep_) {
            const auto spec = maybe("channels").value_or("all");
            keep_ = spec == "all" ? ChannelSet::all(in.channel_count) : ChannelSet(parse_channel_list(spec), in.channel_count);
        }
        outputs["out"] = SpikeChunk{select_channels(in.block, *keep_), in.channel_count};
    }

private:
    std::optional<ChannelSet> keep_;
};

class DecoderBoxImpl final : public Box {
public:
    explicit DecoderBoxImpl(const BoxSpec& spec, std::int64_t first_index) : Box(spec) {
        auto params = DecoderParams::load_file(setting("params"));
        const double initial = number("initial_mm", params.range_min);
        decoder_.emplace(std::move(params), first_index, initial);
    }
    void process(const Tick& tick) override {
        const auto& in = input<SpikeChunk>("in");
        if (in.channel_count != decoder_->params().channel_count())
            throw ConfigError("params expect " + std::to_string(decoder_->params().channel_count()) +
                              " channels, stream has " + std::to_string(in.channel_count));
        decoder_->push(in.block);
        outputs["out"] = SignalChunk{tick.first_index, decoder_->advance_to(tick.end_index)};
    }

private:
    std::optional<OnlineDecoder> decoder_;
};

class AdderBox final : public Box {
public:
    using Box::Box;
    void process(const Tick&) override {
        const auto& a = input<SignalChunk>("a");
        const auto& b = input<SignalChunk>("b");
        if (a.first_index != b.first_index || a.values.size() != b.values.size())
            throw DataError("adder inputs are not aligned");
        SignalChunk out{a.first_index, a.values};
        for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] += b.values[i];
        outputs["out"] = std::move(out);
    }
};

/// Sinks keep every sample they see for the run report.
class SinkBox : public Box {
public:
    using Box::Box;
    void finish(RunReport& report) override {
        for (auto& [key, values] : traces_) report.traces[key] = std::move(values);
    }

protected:
    void keep(const std::string& key, const SignalChunk& c) {
        auto& t = traces_[key];
        t.insert(t.end(), c.values.begin(), c.values.end());
    }
    std::map<std::string, std::vector<double>> traces_;
};

class PrinterBox final : public SinkBox {
public:
    PrinterBox(const BoxSpec& spec, std::ostream* fallback) : SinkBox(spec), out_(fallback) {
        if (auto f = maybe("file")) {
            file_.open(*f);
            if (!file_) throw DataError("cannot write " + *f);
            out_ = &file_;
        }
        label_ = maybe("label").value_or(spec.id);
    }
    void process(const Tick& tick) override {
        const auto& in = input<SignalChunk>("in");
        keep(id(), in);
        if (!out_ || in.values.empty()) return;
        char buf[128];
        std::snprintf(buf, sizeof buf, "t=%.3f %s=%.3f\n", tick.end.seconds(),
                      label_.c_str(), in.values.back());
        *out_ << buf;
    }

private:
    std::ostream* out_;
    std::ofstream file_;
    std::string label_;
};

class NetClientBox final : public SinkBox {
public:
    NetClientBox(const BoxSpec& spec, double rate_hz) : SinkBox(spec), rate_(rate_hz) {
        const auto ep = Endpoint::parse(setting("addr"));
        const auto timeout = Millis(static_cast<std::int64_t>(number("timeout_ms", 50)));
        client_.emplace(Client::connect(ep, std::max(timeout, Millis(1000))));
        client_->set_timeout(timeout);
        poll_ = number("poll", 1) != 0;
    }
    void process(const Tick&) override {
        const auto& in = input<SignalChunk>("in");
        keep(id(), in);
        if (in.values.empty()) return;
        const double v = in.values.back();
        const auto index = in.first_index + static_cast<std::int64_t>(in.values.size()) - 1;
        const auto t_ms = static_cast<std::int64_t>(std::llround(sample_time(index, rate_) * 1000.0));
        try {
            client_->send_target(std::clamp(v, 0.0, 999.999), static_cast<std::uint64_t>(t_ms));
            ++sent_;
            if (poll_) trace_.push_back({t_ms, v, client_->poll_state().aperture.mm(), 0.0});
        } catch (const TransportError& e) {
            ++dropped_;
            spdlog::debug("{}: dropped target at t={} ms: {}", id(), t_ms, e.what());
        }
    }
    void finish(RunReport& report) override {
        SinkBox::finish(report);
        report.targets_sent += sent_;
        report.targets_dropped += dropped_;
        if (report.client_trace.empty()) report.client_trace = std::move(trace_);
    }

private:
    double rate_;
    std::optional<Client> client_;
    bool poll_ = true;
    std::size_t sent_ = 0;
    std::size_t dropped_ = 0;
    std::vector<TraceRecord> trace_;
};

class TraceSinkBox final : public SinkBox {
public:
    TraceSinkBox(const BoxSpec& spec, double rate_hz) : SinkBox(spec), rate_(rate_hz) {
        if (auto f = maybe("file")) {
            file_.open(*f);
            if (!file_) throw DataError("cannot write " + *f);
            file_ << "time_s,index_mm,thumb_mm\n";
        }
    }
    void process(const Tick&) override {
        const auto& a = input<SignalChunk>("index");
        const auto& b = input<SignalChunk>("thumb");
        if (a.first_index != b.first_index || a.values.size() != b.values.size())
            throw DataError("trace inputs are not aligned");
        keep(id() + ".index", a);
        keep(id() + ".thumb", b);
        if (!file_.is_open()) return;
        char buf[96];
        for (std::size_t k = 0; k < a.values.size(); ++k) {
            const double t = sample_time(a.first_index + static_cast<std::int64_t>(k), rate_);
            int n = std::snprintf(buf, sizeof buf, "%.3f,%.3f,%.3f\n", t, a.values[k], b.values[k]);
            file_.write(buf, n);
        }
    }

private:
    double rate_;
    std::ofstream file_;
};

}  // namespace

RunReport run(const ScenarioGraph& graph, const RunOptions& options) {
    const auto wall_start = std::chrono::steady_clock::now();
    const double samples_per_chunk = static_cast<double>(options.chunk_ms) * options.rate_hz / 1000.0;
    if (options.chunk_ms <= 0 || samples_per_chunk < 1.0 || samples_per_chunk != std::floor(samples_per_chunk))
        throw ConfigError("chunk duration must cover a whole number of samples");
    const auto per_chunk = static_cast<std::int64_t>(samples_per_chunk);

    std::vector<std::unique_ptr<Box>> boxes(graph.boxes().size());
    std::map<std::string, Box*> by_id;
    std::optional<double> duration = options.duration_s;
    double last_spike = 0.0;
    for (auto i : graph.order()) {
        const auto& spec = graph.boxes()[i];
        try {
            std::unique_ptr<Box> b;
            if (spec.kind == "CsvReader") {
                auto r = std::make_unique<CsvReaderBox>(spec);
                if (!options.duration_s && r->duration()) duration = std::max(duration.value_or(0.0), *r->duration());
                last_spike = std::max(last_spike, r->last_spike());
                b = std::move(r);
            } else if (spec.kind == "ChannelSelector") {
                b = std::make_unique<ChannelSelectorBox>(spec);
            } else if (spec.kind == "DecoderBox") {
                b = std::make_unique<DecoderBoxImpl>(spec, 0);
            } else if (spec.kind == "Adder") {
                b = std::make_unique<AdderBox>(spec);
            } else if (spec.kind == "Printer") {
                b = std::make_unique<PrinterBox>(spec, options.printer_out);
            } else if (spec.kind == "NetClient") {
                b = std::make_unique<NetClientBox>(spec, options.rate_hz);
            } else {
                b = std::make_unique<TraceSinkBox>(spec, options.rate_hz);
            }
            by_id[spec.id] = b.get();
            boxes[i] = std::move(b);
        } catch (const Error& e) {
            throw PipelineError(spec.id, e);
        }
    }
    for (const auto& l : graph.links()) {
        auto& slot = by_id.at(l.from_box)->outputs[l.from_port];
        by_id.at(l.to_box)->inputs[l.to_port] = &slot;
    }

    const double chunk_s = static_cast<double>(options.chunk_ms) / 1000.0;
    const double total_s = duration.value_or(std::ceil(last_spike / chunk_s) * chunk_s);
    const auto chunks = static_cast<std::size_t>(std::ceil(total_s / chunk_s - 1e-9));

    RunReport report;
    const auto pace_start = std::chrono::steady_clock::now();
    for (std::size_t k = 0; k < chunks; ++k) {
        Tick tick;
        tick.number = k;
        tick.first_index = static_cast<std::int64_t>(k) * per_chunk;
        tick.end_index = tick.first_index + per_chunk;
        tick.start = encode_timestamp(sample_time(tick.first_index, options.rate_hz));
        tick.end = encode_timestamp(sample_time(tick.end_index, options.rate_hz));
        for (auto i : graph.order()) {
            try {
                boxes[i]->process(tick);
            } catch (const Error& e) {
                throw PipelineError(boxes[i]->id(), e);
            }
        }
        const auto end_ms = static_cast<std::int64_t>(k + 1) * options.chunk_ms;
        if (options.on_tick) options.on_tick(end_ms);
        if (!options.virtual_clock) std::this_thread::sleep_until(pace_start + std::chrono::milliseconds(end_ms));
        ++report.chunks;
    }
    for (auto i : graph.order()) boxes[i]->finish(report);
    report.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();
    return report;
}

}  // namespace neurochain
