#include "hhmm/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "hhmm/time_format.hpp"

namespace hhmm {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::vector<std::string_view> split_row(std::string_view line) {
    std::vector<std::string_view> cells;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        if (comma == std::string_view::npos) {
            cells.push_back(line.substr(start));
            break;
        }
        cells.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
    for (auto& c : cells) {
        while (!c.empty() && (c.back() == ' ' || c.back() == '\r')) c.remove_suffix(1);
        while (!c.empty() && c.front() == ' ') c.remove_prefix(1);
    }
    return cells;
}

std::string location(const fs::path& path, std::size_t line) {
    return path.string() + ":" + std::to_string(line);
}

double parse_number(std::string_view cell, const fs::path& path, std::size_t line) {
    double v = 0.0;
    const auto* first = cell.data();
    const auto* last = cell.data() + cell.size();
    if (!cell.empty() && *first == '+') ++first;
    const auto res = std::from_chars(first, last, v);
    if (res.ec != std::errc{} || res.ptr != last || !std::isfinite(v)) {
        throw DataError(location(path, line) + ": cannot parse number '" + std::string(cell) + "'");
    }
    return v;
}

std::ifstream open_input(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    return in;
}

std::ofstream open_output(const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    return out;
}

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
    std::int64_t q = a / b;
    if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
    return q;
}

struct SlotAccumulator {
    std::vector<double> sum;
    std::vector<int> count;
    std::vector<std::vector<int>> categories;  // per discrete feature, counts per category
    bool initialized = false;
};

}  // namespace

std::string format_double(double value) {
    if (std::isnan(value)) return "";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, value);
    return std::string(buf, res.ptr);
}

FeatureKind parse_feature_kind(std::string_view text) {
    if (text == "continuous") return FeatureKind::continuous;
    if (text == "binary") return FeatureKind::binary;
    if (text == "categorical") return FeatureKind::categorical;
    throw DataError("unknown feature kind '" + std::string(text) + "'");
}

std::string to_string(FeatureKind kind) {
    switch (kind) {
        case FeatureKind::continuous: return "continuous";
        case FeatureKind::binary: return "binary";
        case FeatureKind::categorical: return "categorical";
    }
    return "continuous";
}

void DatasetManifest::validate() const {
    if (slot_minutes <= 0) throw DataError("manifest: slot_minutes must be > 0");
    if (!(split_gap_hours > 0.0)) throw DataError("manifest: split_gap_hours must be > 0");
    if (features.empty()) throw DataError("manifest: no features declared");
    std::set<std::string> names;
    for (const auto& f : features) {
        if (f.name.empty() || f.name == "timestamp") throw DataError("manifest: invalid feature name");
        if (!names.insert(f.name).second) throw DataError("manifest: duplicate feature '" + f.name + "'");
        if (f.kind == FeatureKind::binary && f.cardinality != 2) {
            throw DataError("manifest: binary feature '" + f.name + "' must have cardinality 2");
        }
        if (f.kind == FeatureKind::categorical && f.cardinality < 2) {
            throw DataError("manifest: categorical feature '" + f.name + "' needs cardinality >= 2");
        }
        if (f.log1p && !f.is_continuous()) {
            throw DataError("manifest: log1p applies to continuous features only");
        }
    }
}

std::vector<FeatureSpec> DatasetManifest::model_order() const {
    std::vector<FeatureSpec> out;
    for (const auto& f : features)
        if (f.is_continuous()) out.push_back(f);
    for (const auto& f : features)
        if (!f.is_continuous()) out.push_back(f);
    return out;
}

DatasetManifest manifest_from_json(const json& doc, const fs::path& base_dir) {
    DatasetManifest m;
    try {
        auto resolve = [&](const std::string& p) {
            const fs::path path(p);
            return (path.is_absolute() || base_dir.empty() ? path : base_dir / path).string();
        };
        for (const auto& p : doc.at("sequences")) m.sequence_paths.push_back(resolve(p.get<std::string>()));
        if (doc.contains("labels"))
            for (const auto& p : doc.at("labels")) m.label_paths.push_back(resolve(p.get<std::string>()));
        for (const auto& f : doc.at("features")) {
            FeatureSpec spec;
            spec.name = f.at("name").get<std::string>();
            spec.kind = parse_feature_kind(f.at("kind").get<std::string>());
            spec.cardinality = f.value("cardinality", 2);
            spec.log1p = f.value("log1p", false);
            m.features.push_back(std::move(spec));
        }
        m.slot_minutes = doc.value("slot_minutes", 10);
        m.split_gap_hours = doc.value("split_gap_hours", 6.0);
    } catch (const json::exception& e) {
        throw DataError(std::string("manifest: ") + e.what());
    }
    m.validate();
    return m;
}

json manifest_to_json(const DatasetManifest& manifest) {
    json doc;
    doc["sequences"] = manifest.sequence_paths;
    doc["labels"] = manifest.label_paths;
    doc["slot_minutes"] = manifest.slot_minutes;
    doc["split_gap_hours"] = manifest.split_gap_hours;
    json features = json::array();
    for (const auto& f : manifest.features) {
        json jf{{"name", f.name}, {"kind", to_string(f.kind)}};
        if (!f.is_continuous()) jf["cardinality"] = f.cardinality;
        if (f.log1p) jf["log1p"] = true;
        features.push_back(std::move(jf));
    }
    doc["features"] = std::move(features);
    return doc;
}

DatasetManifest load_manifest(const fs::path& path) {
    auto in = open_input(path);
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw DataError("manifest " + path.string() + ": " + e.what());
    }
    return manifest_from_json(doc, path.parent_path());
}

void save_manifest(const fs::path& path, const DatasetManifest& manifest) {
    auto out = open_output(path);
    out << manifest_to_json(manifest).dump(2) << '\n';
}

std::vector<ObservationSequence> ingest_csv(const DatasetManifest& manifest) {
    manifest.validate();
    std::vector<ObservationSequence> out;
    for (const auto& p : manifest.sequence_paths) {
        auto parts = ingest_csv_file(p, manifest);
        for (auto& s : parts) out.push_back(std::move(s));
    }
    return out;
}

std::vector<ObservationSequence> ingest_csv_file(const fs::path& path,
                                                 const DatasetManifest& manifest) {
    manifest.validate();
    const auto schema = manifest.model_order();
    const int F = static_cast<int>(schema.size());
    int G = 0;
    for (const auto& f : schema) G += f.is_continuous() ? 1 : 0;
    const int J = F - G;

    auto in = open_input(path);
    std::string line;
    std::size_t line_no = 0;
    if (!std::getline(in, line)) throw DataError(path.string() + ": empty file");
    ++line_no;
    const auto header = split_row(line);
    if (header.empty() || header[0] != "timestamp") {
        throw DataError(location(path, 1) + ": header must start with 'timestamp'");
    }
    std::vector<int> column_feature(header.size(), -1);
    std::set<std::string_view> seen_columns;
    for (std::size_t c = 1; c < header.size(); ++c) {
        auto it = std::find_if(schema.begin(), schema.end(),
                               [&](const FeatureSpec& f) { return f.name == header[c]; });
        if (it == schema.end()) {
            throw DataError(location(path, 1) + ": unknown feature '" + std::string(header[c]) + "'");
        }
        if (!seen_columns.insert(header[c]).second) {
            throw DataError(location(path, 1) + ": duplicate column '" + std::string(header[c]) + "'");
        }
        column_feature[c] = static_cast<int>(it - schema.begin());
    }

    const std::int64_t slot_seconds = static_cast<std::int64_t>(manifest.slot_minutes) * 60;
    std::map<std::int64_t, SlotAccumulator> slots;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        const auto cells = split_row(line);
        if (cells.size() != header.size()) {
            throw DataError(location(path, line_no) + ": expected " + std::to_string(header.size()) +
                            " cells, found " + std::to_string(cells.size()));
        }
        std::int64_t ts = 0;
        try {
            ts = parse_timestamp(cells[0]);
        } catch (const DataError& e) {
            throw DataError(location(path, line_no) + ": " + e.what());
        }
        auto& acc = slots[floor_div(ts, slot_seconds)];
        if (!acc.initialized) {
            acc.initialized = true;
            acc.sum.assign(static_cast<std::size_t>(G), 0.0);
            acc.count.assign(static_cast<std::size_t>(G), 0);
            acc.categories.resize(static_cast<std::size_t>(J));
            for (int j = 0; j < J; ++j) acc.categories[j].assign(static_cast<std::size_t>(schema[G + j].cardinality), 0);
        }
        for (std::size_t c = 1; c < cells.size(); ++c) {
            if (cells[c].empty()) continue;
            const int f = column_feature[c];
            const double v = parse_number(cells[c], path, line_no);
            if (f < G) {
                acc.sum[f] += v;
                ++acc.count[f];
                continue;
            }
            const auto& spec = schema[f];
            int category = 0;
            if (spec.kind == FeatureKind::binary) {
                category = v > 0.0 ? 1 : 0;
            } else {
                if (v != std::floor(v) || v < 0.0 || v >= spec.cardinality) {
                    throw DataError(location(path, line_no) + ": category '" + std::string(cells[c]) +
                                    "' out of range for '" + spec.name + "'");
                }
                category = static_cast<int>(v);
            }
            ++acc.categories[f - G][category];
        }
    }
    if (slots.empty()) throw DataError(path.string() + ": no data rows");

    const std::int64_t first = slots.begin()->first;
    const std::int64_t last = slots.rbegin()->first;
    const Index T = static_cast<Index>(last - first + 1);
    std::vector<std::int64_t> ts(static_cast<std::size_t>(T));
    for (Index t = 0; t < T; ++t) ts[t] = (first + t) * slot_seconds;
    std::vector<int> cards;
    std::vector<std::string> names;
    for (const auto& f : schema) names.push_back(f.name);
    for (int j = 0; j < J; ++j) cards.push_back(schema[G + j].cardinality);
    ObservationSequence full = make_empty_sequence(std::move(ts), G, cards, names);

    for (const auto& [slot, acc] : slots) {
        const Index t = static_cast<Index>(slot - first);
        for (int g = 0; g < G; ++g) {
            if (acc.count[g] == 0) continue;
            double v = acc.sum[g] / acc.count[g];
            if (schema[g].log1p) {
                if (v <= -1.0) throw DataError(path.string() + ": log1p undefined for '" + schema[g].name + "'");
                v = std::log1p(v);
            }
            full.continuous(t, g) = v;
            full.continuous_mask(t, g) = true;
        }
        for (int j = 0; j < J; ++j) {
            const auto& counts = acc.categories[j];
            int best = -1;
            int best_count = 0;
            for (int c = 0; c < static_cast<int>(counts.size()); ++c) {
                if (counts[c] > best_count) {
                    best_count = counts[c];
                    best = c;
                }
            }
            if (best < 0) continue;
            if (schema[G + j].kind == FeatureKind::binary) best = counts[1] > 0 ? 1 : 0;
            full.discrete(t, j) = best;
            full.discrete_mask(t, j) = true;
        }
    }

    // Split on long fully-missing runs.
    const Index max_gap_slots =
        static_cast<Index>(std::floor(manifest.split_gap_hours * 60.0 / manifest.slot_minutes));
    std::vector<std::pair<Index, Index>> ranges;  // [begin, end)
    Index begin = 0;
    Index t = 0;
    while (t < T) {
        if (!full.fully_missing(t)) {
            ++t;
            continue;
        }
        Index run_end = t;
        while (run_end < T && full.fully_missing(run_end)) ++run_end;
        if (run_end - t > max_gap_slots) {
            if (t > begin) ranges.emplace_back(begin, t);
            begin = run_end;
        }
        t = run_end;
    }
    if (T > begin) ranges.emplace_back(begin, T);

    std::vector<ObservationSequence> out;
    const std::string stem = path.stem().string();
    for (std::size_t r = 0; r < ranges.size(); ++r) {
        const auto [b, e] = ranges[r];
        ObservationSequence part;
        part.id = ranges.size() == 1 ? stem : stem + "#" + std::to_string(r);
        part.timestamps.assign(full.timestamps.begin() + b, full.timestamps.begin() + e);
        part.continuous = full.continuous.middleRows(b, e - b);
        part.continuous_mask = full.continuous_mask.middleRows(b, e - b);
        part.discrete = full.discrete.middleRows(b, e - b);
        part.discrete_mask = full.discrete_mask.middleRows(b, e - b);
        part.feature_names = full.feature_names;
        part.cardinalities = full.cardinalities;
        check_sequence(part);
        out.push_back(std::move(part));
    }
    return out;
}

int stage_to_label(std::string_view stage) {
    std::string s(stage);
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    if (s == "awake" || s == "wake") return 0;
    if (s == "light" || s == "deep" || s == "rem") return 1;
    throw DataError("unknown sleep stage '" + std::string(stage) + "'");
}

SleepLabels ingest_labels(std::span<const std::string> paths, int slot_minutes) {
    if (slot_minutes <= 0) throw DataError("slot_minutes must be > 0");
    const std::int64_t slot_seconds = static_cast<std::int64_t>(slot_minutes) * 60;
    std::map<std::int64_t, std::pair<int, int>> votes;  // slot -> (awake, asleep)
    for (const auto& p : paths) {
        const fs::path path(p);
        auto in = open_input(path);
        std::string line;
        std::size_t line_no = 1;
        if (!std::getline(in, line)) throw DataError(path.string() + ": empty file");
        const auto header = split_row(line);
        if (header.size() != 2 || header[0] != "timestamp" ||
            (header[1] != "stage" && header[1] != "label")) {
            throw DataError(location(path, 1) + ": expected header 'timestamp,stage' or 'timestamp,label'");
        }
        const bool stages = header[1] == "stage";
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty() || line == "\r") continue;
            const auto cells = split_row(line);
            if (cells.size() != 2) throw DataError(location(path, line_no) + ": expected 2 cells");
            if (cells[1].empty()) continue;
            std::int64_t ts = 0;
            int label = 0;
            try {
                ts = parse_timestamp(cells[0]);
                if (stages) {
                    label = stage_to_label(cells[1]);
                } else {
                    const double v = parse_number(cells[1], path, line_no);
                    if (v != 0.0 && v != 1.0) throw DataError("label must be 0 or 1");
                    label = static_cast<int>(v);
                }
            } catch (const DataError& e) {
                throw DataError(location(path, line_no) + ": " + e.what());
            }
            auto& v = votes[floor_div(ts, slot_seconds)];
            (label == 1 ? v.second : v.first)++;
        }
    }
    SleepLabels out;
    out.source = LabelSource::wearable;
    for (const auto& [slot, v] : votes) {
        out.timestamps.push_back(slot * slot_seconds);
        out.label.push_back(v.second >= v.first ? 1 : 0);
    }
    return out;
}

SleepLabels align_labels(const SleepLabels& labels, std::span<const std::int64_t> timestamps) {
    SleepLabels out;
    out.source = labels.source;
    out.timestamps.assign(timestamps.begin(), timestamps.end());
    out.label.assign(timestamps.size(), kUnlabeled);
    std::map<std::int64_t, std::int8_t> index;
    for (std::size_t k = 0; k < labels.size(); ++k) index[labels.timestamps[k]] = labels.label[k];
    for (std::size_t t = 0; t < timestamps.size(); ++t) {
        const auto it = index.find(timestamps[t]);
        if (it != index.end()) out.label[t] = it->second;
    }
    return out;
}

void write_predictions(const fs::path& path, std::span<const NamedLabels> predictions) {
    auto out = open_output(path);
    out << "sequence,timestamp,label\n";
    for (const auto& p : predictions) {
        if (p.labels.timestamps.size() != p.labels.size()) {
            throw std::invalid_argument("predictions need one timestamp per label");
        }
        for (std::size_t t = 0; t < p.labels.size(); ++t) {
            out << p.sequence << ',' << format_timestamp(p.labels.timestamps[t]) << ',';
            if (p.labels.label[t] != kUnlabeled) out << static_cast<int>(p.labels.label[t]);
            out << '\n';
        }
    }
}

std::vector<NamedLabels> read_predictions(const fs::path& path) {
    auto in = open_input(path);
    std::string line;
    std::size_t line_no = 1;
    if (!std::getline(in, line)) throw DataError(path.string() + ": empty file");
    const auto header = split_row(line);
    if (header.size() != 3 || header[0] != "sequence" || header[1] != "timestamp" || header[2] != "label") {
        throw DataError(location(path, 1) + ": expected header 'sequence,timestamp,label'");
    }
    std::vector<NamedLabels> out;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        const auto cells = split_row(line);
        if (cells.size() != 3) throw DataError(location(path, line_no) + ": expected 3 cells");
        if (out.empty() || out.back().sequence != cells[0]) {
            out.push_back({std::string(cells[0]), {}});
            out.back().labels.source = LabelSource::model;
        }
        auto& labels = out.back().labels;
        try {
            labels.timestamps.push_back(parse_timestamp(cells[1]));
        } catch (const DataError& e) {
            throw DataError(location(path, line_no) + ": " + e.what());
        }
        if (cells[2].empty()) {
            labels.label.push_back(kUnlabeled);
        } else {
            const double v = parse_number(cells[2], path, line_no);
            if (v != 0.0 && v != 1.0) throw DataError(location(path, line_no) + ": label must be 0 or 1");
            labels.label.push_back(static_cast<std::int8_t>(v));
        }
    }
    return out;
}

void emit_plot_data(const ObservationSequence& seq, const Matrix& gamma, const SleepLabels& predicted,
                    const SleepLabels* truth, const fs::path& path) {
    const Index T = seq.length();
    if (gamma.rows() != T || static_cast<Index>(predicted.size()) != T ||
        (truth && static_cast<Index>(truth->size()) != T)) {
        throw std::invalid_argument("emit_plot_data: inputs are not aligned with the sequence");
    }
    const int G = seq.num_continuous();
    const int J = seq.num_discrete();
    auto out = open_output(path);
    out << "timestamp";
    for (int f = 0; f < G + J; ++f) out << ',' << seq.feature_names[f] << ',' << seq.feature_names[f] << "_observed";
    for (Index i = 0; i < gamma.cols(); ++i) out << ",gamma_" << i;
    out << ",predicted";
    if (truth) out << ",truth";
    out << '\n';
    for (Index t = 0; t < T; ++t) {
        out << format_timestamp(seq.timestamps[t]);
        for (int g = 0; g < G; ++g) {
            out << ',';
            if (seq.continuous_mask(t, g)) out << format_double(seq.continuous(t, g));
            out << ',' << (seq.continuous_mask(t, g) ? 1 : 0);
        }
        for (int j = 0; j < J; ++j) {
            out << ',';
            if (seq.discrete_mask(t, j)) out << seq.discrete(t, j);
            out << ',' << (seq.discrete_mask(t, j) ? 1 : 0);
        }
        for (Index i = 0; i < gamma.cols(); ++i) out << ',' << format_double(gamma(t, i));
        out << ',';
        if (predicted.label[t] != kUnlabeled) out << static_cast<int>(predicted.label[t]);
        if (truth) {
            out << ',';
            if (truth->label[t] != kUnlabeled) out << static_cast<int>(truth->label[t]);
        }
        out << '\n';
    }
}

void write_state_csv(const fs::path& path, const ObservationSequence& seq, std::span<const int> states,
                     const Matrix& gamma, const SleepLabels& predicted) {
    const Index T = seq.length();
    if (static_cast<Index>(states.size()) != T || gamma.rows() != T ||
        static_cast<Index>(predicted.size()) != T) {
        throw std::invalid_argument("write_state_csv: inputs are not aligned with the sequence");
    }
    auto out = open_output(path);
    out << "timestamp,state";
    for (Index i = 0; i < gamma.cols(); ++i) out << ",gamma_" << i;
    out << ",asleep\n";
    for (Index t = 0; t < T; ++t) {
        out << format_timestamp(seq.timestamps[t]) << ',' << states[t];
        for (Index i = 0; i < gamma.cols(); ++i) out << ',' << format_double(gamma(t, i));
        out << ',' << static_cast<int>(predicted.label[t]) << '\n';
    }
}

void write_selection_csv(const fs::path& path, const SelectionResult& result) {
    auto out = open_output(path);
    out << "I,loglik,k,bic,aic,error\n";
    for (const auto& row : result.rows) {
        out << row.num_states << ',';
        if (row.error) {
            out << ",," << ",," << '"' << *row.error << '"' << '\n';
            continue;
        }
        out << format_double(row.log_likelihood) << ',' << row.num_parameters << ','
            << format_double(row.bic) << ',' << format_double(row.aic) << ",\n";
    }
}

void write_selection_plot_data(const fs::path& path, const SelectionResult& result) {
    auto out = open_output(path);
    out << "criterion,I,value,chosen\n";
    for (const char* criterion : {"bic", "aic"}) {
        for (const auto& row : result.rows) {
            if (row.error) continue;
            const double v = std::string_view(criterion) == "bic" ? row.bic : row.aic;
            out << criterion << ',' << row.num_states << ',' << format_double(v) << ','
                << (row.num_states == result.chosen ? 1 : 0) << '\n';
        }
    }
}

void write_sequence_csv(const fs::path& path, const ObservationSequence& seq) {
    const int G = seq.num_continuous();
    const int J = seq.num_discrete();
    auto out = open_output(path);
    out << "timestamp";
    for (int f = 0; f < G + J; ++f) out << ',' << seq.feature_names[f];
    out << '\n';
    for (Index t = 0; t < seq.length(); ++t) {
        out << format_timestamp(seq.timestamps[t]);
        for (int g = 0; g < G; ++g) {
            out << ',';
            if (seq.continuous_mask(t, g)) out << format_double(seq.continuous(t, g));
        }
        for (int j = 0; j < J; ++j) {
            out << ',';
            if (seq.discrete_mask(t, j)) out << seq.discrete(t, j);
        }
        out << '\n';
    }
}

}  // namespace hhmm
