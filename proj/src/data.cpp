#include "glf/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

#include "glf/errors.hpp"

namespace glf::data {

namespace {
constexpr const char* kCsvHeader =
    "event_id,channel_id,channel_kind,t_index,value,t_f,split";
}

void GridEventSpec::validate() const {
    if (bus_count == 0) throw ConfigError("spec needs at least the target bus");
    if (samples == 0) throw ConfigError("spec needs a positive sample count");
    if (t_f >= samples) throw ConfigError("fault index must lie inside the window");
    if (sample_rate <= 0.0) throw ConfigError("sample rate must be positive");
    if (noise < 0.0 || amp_jitter < 0.0 || phase_jitter < 0.0)
        throw ConfigError("noise and jitter magnitudes must be nonnegative");
    for (const Mode& m : modes)
        if (m.damping <= 0.0)
            throw ConfigError("mode damping must be positive for a stable ring-down");
}

GridEventSpec GridEventSpec::defaults() {
    GridEventSpec spec;
    spec.modes = {{0.35, 2.2, 0.08, 0.4}, {0.6, 4.1, 0.05, -1.1}, {0.9, 5.7, 0.03, 2.0}};
    return spec;
}

const char* split_name(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::Val: return "val";
        default: return "test";
    }
}

Split split_from_name(const std::string& name) {
    if (name == "train") return Split::Train;
    if (name == "val") return Split::Val;
    if (name == "test") return Split::Test;
    throw IoError("unknown split name: " + name);
}

const char* kind_name(ChannelKind k) {
    switch (k) {
        case ChannelKind::TargetVoltage: return "target_voltage";
        case ChannelKind::NeighborVoltage: return "neighbor_voltage";
        default: return "line_current";
    }
}

ChannelKind kind_from_name(const std::string& name) {
    if (name == "target_voltage") return ChannelKind::TargetVoltage;
    if (name == "neighbor_voltage") return ChannelKind::NeighborVoltage;
    if (name == "line_current") return ChannelKind::LineCurrent;
    throw IoError("unknown channel kind: " + name);
}

ChannelKind kind_of(const GridEventSpec& spec, std::size_t channel) {
    if (channel >= spec.channels()) throw ShapeError("channel index out of range");
    if (channel == 0) return ChannelKind::TargetVoltage;
    if (channel < spec.bus_count) return ChannelKind::NeighborVoltage;
    return ChannelKind::LineCurrent;
}

std::vector<double> make_stamp(std::size_t len, std::size_t t_f) {
    if (len == 0) throw ShapeError("stamp needs a positive length");
    if (t_f >= len) throw ShapeError("fault index must lie inside the window");
    std::vector<double> s(len);
    const double denom =
        static_cast<double>(std::max<std::size_t>(std::max(t_f, len - 1 - t_f), 1));
    for (std::size_t t = 0; t < len; ++t)
        s[t] = (static_cast<double>(t) - static_cast<double>(t_f)) / denom;
    return s;
}

FaultEvent generate_event(const GridEventSpec& spec, Rng& rng) {
    spec.validate();
    const std::size_t f = spec.channels();
    const std::size_t l = spec.samples;
    const std::size_t m = spec.modes.size();

    FaultEvent ev;
    ev.features = Tensor::zeros({f, l});
    ev.stamp = make_stamp(l, spec.t_f);
    ev.t_f = spec.t_f;
    ev.target_channel = 0;

    // per-event realization of the shared modal family
    std::vector<double> amp(m), phase(m);
    double swing = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        amp[i] = spec.modes[i].amp * (1.0 + spec.amp_jitter * rng.uniform(-1.0, 1.0));
        phase[i] = spec.modes[i].phase + spec.phase_jitter * rng.uniform(-1.0, 1.0);
        swing += std::fabs(amp[i]);
    }
    // fault severity follows the transient energy it releases
    const double dip_depth = 0.5 * swing;
    const std::size_t dip_len = std::max<std::size_t>(1, l / 32);

    for (std::size_t c = 0; c < f; ++c) {
        const bool current = kind_of(spec, c) == ChannelKind::LineCurrent;
        const double level = current ? 0.5 * spec.v_ss : spec.v_ss;
        double gain = 1.0, shift = 0.0;
        if (c != 0) {
            gain = rng.uniform(0.4, 1.0);
            shift = rng.uniform(-0.7, 0.7);
        }
        double* row = ev.features.data().data() + c * l;
        for (std::size_t t = 0; t < l; ++t) {
            double v = level;
            if (t >= spec.t_f) {
                const double tau = static_cast<double>(t - spec.t_f) / spec.sample_rate;
                for (std::size_t i = 0; i < m; ++i)
                    v += gain * amp[i] * std::exp(-spec.modes[i].damping * tau) *
                         std::cos(spec.modes[i].freq * tau + phase[i] + shift);
            } else if (t + dip_len >= spec.t_f) {
                // fault is on: voltages sag, currents surge
                v += (current ? gain : -gain) * dip_depth;
            }
            if (spec.noise > 0.0) v += rng.normal(0.0, spec.noise);
            row[t] = v;
        }
    }
    return ev;
}

std::vector<std::size_t> split_sizes(std::size_t n, const SplitRatio& ratio) {
    const double parts[3] = {ratio.train, ratio.val, ratio.test};
    double sum = 0.0;
    for (double p : parts) {
        if (p < 0.0) throw ConfigError("split ratios must be nonnegative");
        sum += p;
    }
    if (std::fabs(sum - 1.0) > 1e-9) throw ConfigError("split ratios must sum to 1");

    std::vector<std::size_t> sizes(3);
    double frac[3];
    std::size_t used = 0;
    for (int i = 0; i < 3; ++i) {
        const double exact = static_cast<double>(n) * parts[i];
        sizes[i] = static_cast<std::size_t>(std::floor(exact + 1e-12));
        frac[i] = exact - static_cast<double>(sizes[i]);
        used += sizes[i];
    }
    while (used < n) {  // hand leftovers to the largest remainders
        int best = 0;
        for (int i = 1; i < 3; ++i)
            if (frac[i] > frac[best]) best = i;
        ++sizes[best];
        frac[best] = -1.0;
        ++used;
    }
    for (int i = 0; i < 3; ++i)
        if (sizes[i] == 0)
            throw ConfigError(std::string("the ") + split_name(static_cast<Split>(i)) +
                              " split would be empty; use more events or other ratios");
    return sizes;
}

std::size_t Dataset::count(Split s) const {
    std::size_t n = 0;
    for (Split x : split)
        if (x == s) ++n;
    return n;
}

std::vector<std::size_t> Dataset::indices(Split s) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < split.size(); ++i)
        if (split[i] == s) out.push_back(i);
    return out;
}

Dataset build_dataset(const GridEventSpec& spec, std::size_t n_events,
                      std::uint64_t seed, SplitRatio ratio) {
    spec.validate();
    if (n_events < 3)
        throw ConfigError("need at least 3 events to populate train/val/test");
    const auto sizes = split_sizes(n_events, ratio);

    Dataset ds;
    Rng master(seed);
    ds.events.reserve(n_events);
    for (std::size_t i = 0; i < n_events; ++i) {
        Rng ev_rng = master.fork(i);
        ds.events.push_back(generate_event(spec, ev_rng));
    }

    ds.split.resize(n_events);
    for (std::size_t i = 0; i < n_events; ++i)
        ds.split[i] = i < sizes[0]            ? Split::Train
                      : i < sizes[0] + sizes[1] ? Split::Val
                                                : Split::Test;

    const std::size_t f = spec.channels();
    const std::size_t l = spec.samples;
    ds.kinds.resize(f);
    for (std::size_t c = 0; c < f; ++c) ds.kinds[c] = kind_of(spec, c);

    // zero-mean shift per channel, statistics from the train split only
    ds.channel_mean.assign(f, 0.0);
    for (std::size_t i = 0; i < sizes[0]; ++i)
        for (std::size_t c = 0; c < f; ++c)
            for (std::size_t t = 0; t < l; ++t)
                ds.channel_mean[c] += ds.events[i].features.at(c, t);
    const double inv = 1.0 / static_cast<double>(sizes[0] * l);
    for (std::size_t c = 0; c < f; ++c) ds.channel_mean[c] *= inv;
    for (FaultEvent& ev : ds.events)
        for (std::size_t c = 0; c < f; ++c)
            for (std::size_t t = 0; t < l; ++t)
                ev.features.at(c, t) -= ds.channel_mean[c];
    return ds;
}

FaultWindow to_window(const FaultEvent& ev) {
    if (ev.features.shape().size() != 2)
        throw ShapeError("event features must be channels x samples");
    const std::size_t f = ev.features.shape()[0];
    const std::size_t l = ev.features.shape()[1];
    if (ev.stamp.size() != l) throw ShapeError("stamp length must match the window");
    if (ev.t_f >= l) throw ShapeError("fault index must lie inside the window");
    if (ev.target_channel >= f) throw ShapeError("target channel out of range");

    FaultWindow w;
    w.x_en = Tensor::zeros({f + 1, l});
    for (std::size_t c = 0; c < f; ++c)
        for (std::size_t t = 0; t < l; ++t) w.x_en.at(c, t) = ev.features.at(c, t);
    for (std::size_t t = 0; t < l; ++t) w.x_en.at(f, t) = ev.stamp[t];

    w.x_de = w.x_en.clone();
    for (std::size_t c = 0; c < f; ++c)
        for (std::size_t t = ev.t_f + 1; t < l; ++t) w.x_de.at(c, t) = 0.0;

    const std::size_t horizon = l - ev.t_f;
    w.target = Tensor::zeros({1, horizon});
    for (std::size_t t = 0; t < horizon; ++t)
        w.target.at(0, t) = ev.features.at(ev.target_channel, ev.t_f + t);
    return w;
}

void write_events_csv(const Dataset& ds, const std::string& path) {
    if (ds.events.empty()) throw IoError("refusing to write an empty dataset");
    if (ds.split.size() != ds.events.size())
        throw ShapeError("split assignments must match the event list");
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << kCsvHeader << '\n';
    char buf[40];
    for (std::size_t e = 0; e < ds.events.size(); ++e) {
        const FaultEvent& ev = ds.events[e];
        const std::size_t f = ev.features.shape()[0];
        const std::size_t l = ev.features.shape()[1];
        if (ds.kinds.size() != f)
            throw ShapeError("channel kinds must match the channel count");
        for (std::size_t c = 0; c < f; ++c)
            for (std::size_t t = 0; t < l; ++t) {
                std::snprintf(buf, sizeof buf, "%.17g", ev.features.at(c, t));
                out << e << ',' << c << ',' << kind_name(ds.kinds[c]) << ',' << t
                    << ',' << buf << ',' << ev.t_f << ',' << split_name(ds.split[e])
                    << '\n';
            }
    }
    if (!out) throw IoError("write failed: " + path);
}

namespace {

struct CsvRow {
    std::size_t event, channel, t, t_f;
    ChannelKind kind;
    Split split;
    double value;
};

std::size_t parse_index(const std::string& field, const std::string& where) {
    std::size_t pos = 0;
    unsigned long long v = 0;
    try {
        v = std::stoull(field, &pos);
    } catch (const std::exception&) {
        throw IoError(where + ": expected a nonnegative integer, got '" + field + "'");
    }
    if (pos != field.size())
        throw IoError(where + ": trailing characters in '" + field + "'");
    return static_cast<std::size_t>(v);
}

double parse_value(const std::string& field, const std::string& where) {
    const char* s = field.c_str();
    char* end = nullptr;
    const double v = std::strtod(s, &end);
    if (end == s || *end != '\0')
        throw IoError(where + ": expected a number, got '" + field + "'");
    return v;
}

}  // namespace

Dataset read_events_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open: " + path);
    std::string line;
    if (!std::getline(in, line)) throw IoError("empty dataset file: " + path);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != kCsvHeader)
        throw IoError(path + ":1: expected header '" + kCsvHeader + "'");

    std::vector<CsvRow> rows;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const std::string where = path + ":" + std::to_string(lineno);
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, ',')) fields.push_back(field);
        if (fields.size() != 7)
            throw IoError(where + ": expected 7 fields, got " +
                          std::to_string(fields.size()));
        CsvRow r;
        r.event = parse_index(fields[0], where);
        r.channel = parse_index(fields[1], where);
        try {
            r.kind = kind_from_name(fields[2]);
            r.split = split_from_name(fields[6]);
        } catch (const IoError& e) {
            throw IoError(where + ": " + e.what());
        }
        r.t = parse_index(fields[3], where);
        r.value = parse_value(fields[4], where);
        r.t_f = parse_index(fields[5], where);
        rows.push_back(r);
    }
    if (rows.empty()) throw IoError("no event rows in: " + path);

    struct Accum {
        std::size_t channels = 0, len = 0, t_f = 0;
        Split split = Split::Train;
        bool meta_set = false;
        std::vector<ChannelKind> kinds;
        std::map<std::pair<std::size_t, std::size_t>, double> cells;
    };
    std::map<std::size_t, Accum> by_event;
    for (const CsvRow& r : rows) {
        Accum& a = by_event[r.event];
        if (!a.meta_set) {
            a.t_f = r.t_f;
            a.split = r.split;
            a.meta_set = true;
        } else if (a.t_f != r.t_f || a.split != r.split) {
            throw IoError(path + ": event " + std::to_string(r.event) +
                          " has conflicting t_f or split values");
        }
        a.channels = std::max(a.channels, r.channel + 1);
        a.len = std::max(a.len, r.t + 1);
        if (a.kinds.size() < a.channels) a.kinds.resize(a.channels);
        a.kinds[r.channel] = r.kind;
        if (!a.cells.emplace(std::make_pair(r.channel, r.t), r.value).second)
            throw IoError(path + ": duplicate sample for event " +
                          std::to_string(r.event));
    }

    Dataset ds;
    bool first = true;
    std::size_t f = 0, l = 0;
    for (auto& [id, a] : by_event) {
        if (first) {
            f = a.channels;
            l = a.len;
            ds.kinds = a.kinds;
            first = false;
        } else if (a.channels != f || a.len != l || a.kinds != ds.kinds) {
            throw IoError(path + ": event " + std::to_string(id) +
                          " has an inconsistent channel layout or sample count");
        }
        if (a.cells.size() != f * l)
            throw IoError(path + ": event " + std::to_string(id) +
                          " is missing samples");
        if (a.t_f >= l)
            throw IoError(path + ": event " + std::to_string(id) +
                          " has t_f outside the window");
        FaultEvent ev;
        ev.features = Tensor::zeros({f, l});
        for (const auto& [key, value] : a.cells)
            ev.features.at(key.first, key.second) = value;
        ev.stamp = make_stamp(l, a.t_f);
        ev.t_f = a.t_f;
        std::size_t targets = 0;
        for (std::size_t c = 0; c < f; ++c)
            if (ds.kinds[c] == ChannelKind::TargetVoltage) {
                ev.target_channel = c;
                ++targets;
            }
        if (targets != 1)
            throw IoError(path + ": expected exactly one target_voltage channel, got " +
                          std::to_string(targets));
        ds.events.push_back(std::move(ev));
        ds.split.push_back(a.split);
    }
    ds.channel_mean.assign(f, 0.0);  // values are stored post-shift
    return ds;
}

}  // namespace glf::data
