#include "cli.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include "hhmm/hhmm.hpp"

namespace hhmm::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct CommonOptions {
    std::string manifest;
    std::string out = ".";
    std::string config;
    std::optional<std::uint64_t> seed;
    int threads = 1;
};

struct CommandOptions {
    CommonOptions common;
    std::optional<int> states;
    std::vector<std::string> clamps;
    std::string sleep_states;
    std::string states_range;
    std::string model;
    std::string pred;
    std::vector<std::string> truth;
    std::string method = "kmeans";
    int imputer = 1;
    std::string actigraphy = "actigraphy";
    int days = 0;
    std::string missing;
    int slot_minutes = 10;
    std::string start = "2024-01-01T00:00:00";
};

std::vector<std::string> split(std::string_view text, char sep) {
    std::vector<std::string> out;
    std::size_t begin = 0;
    while (begin <= text.size()) {
        const auto end = text.find(sep, begin);
        const auto piece = text.substr(begin, end == std::string_view::npos ? text.npos : end - begin);
        out.emplace_back(piece);
        if (end == std::string_view::npos) break;
        begin = end + 1;
    }
    return out;
}

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t");
    return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T parse_number(std::string_view text, std::string_view what) {
    const std::string t = trim(text);
    T value{};
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
    if (ec != std::errc{} || ptr != t.data() + t.size() || t.empty())
        throw UsageError("invalid " + std::string(what) + ": '" + std::string(text) + "'");
    return value;
}

std::vector<int> parse_int_list(std::string_view text, std::string_view what) {
    std::vector<int> out;
    if (trim(text).empty()) return out;
    for (const auto& piece : split(text, ',')) out.push_back(parse_number<int>(piece, what));
    return out;
}

std::vector<int> parse_state_range(std::string_view text) {
    const auto dots = text.find("..");
    std::vector<int> out;
    if (dots == std::string_view::npos) {
        out = parse_int_list(text, "state range");
    } else {
        const int a = parse_number<int>(text.substr(0, dots), "state range");
        const int b = parse_number<int>(text.substr(dots + 2), "state range");
        if (a > b) throw UsageError("empty state range '" + std::string(text) + "'");
        for (int i = a; i <= b; ++i) out.push_back(i);
    }
    if (out.empty()) throw UsageError("empty state range");
    for (int i : out)
        if (i < 1) throw UsageError("state counts must be >= 1");
    return out;
}

// Index of a discrete feature given by name or by discrete index.
int discrete_feature_index(const std::string& key, const std::vector<FeatureSpec>& schema) {
    std::vector<std::string> names;
    for (const auto& f : schema)
        if (!f.is_continuous()) names.push_back(f.name);
    for (std::size_t j = 0; j < names.size(); ++j)
        if (names[j] == key) return static_cast<int>(j);
    int idx = -1;
    const auto [ptr, ec] = std::from_chars(key.data(), key.data() + key.size(), idx);
    if (ec == std::errc{} && ptr == key.data() + key.size() && idx >= 0 &&
        idx < static_cast<int>(names.size()))
        return idx;
    throw UsageError("clamp names unknown discrete feature '" + key + "'");
}

// "state=4,feature=app_usage,value=1,prob=0"
ClampEntry parse_clamp(std::string_view spec, const std::vector<FeatureSpec>& schema) {
    std::map<std::string, std::string> kv;
    for (const auto& piece : split(spec, ',')) {
        const auto eq = piece.find('=');
        if (eq == std::string::npos) throw UsageError("malformed clamp '" + std::string(spec) + "'");
        kv[trim(piece.substr(0, eq))] = trim(piece.substr(eq + 1));
    }
    auto take = [&](std::initializer_list<const char*> keys) -> std::string {
        for (const char* k : keys)
            if (auto it = kv.find(k); it != kv.end()) return it->second;
        throw UsageError("clamp '" + std::string(spec) + "' lacks " + *keys.begin());
    };
    ClampEntry e;
    e.state = parse_number<int>(take({"state"}), "clamp state");
    e.feature = discrete_feature_index(take({"feature"}), schema);
    e.category = parse_number<int>(take({"value", "category"}), "clamp value");
    e.probability = parse_number<double>(take({"prob", "probability"}), "clamp probability");
    if (kv.size() != 4) throw UsageError("clamp '" + std::string(spec) + "' has unknown keys");
    return e;
}

ClampEntry clamp_from_json(const json& j, const std::vector<FeatureSpec>& schema) {
    if (j.is_string()) return parse_clamp(j.get<std::string>(), schema);
    ClampEntry e;
    e.state = j.at("state").get<int>();
    const auto& f = j.at("feature");
    e.feature = f.is_string() ? discrete_feature_index(f.get<std::string>(), schema) : f.get<int>();
    e.category = j.contains("value") ? j.at("value").get<int>() : j.at("category").get<int>();
    e.probability = j.contains("prob") ? j.at("prob").get<double>() : j.at("probability").get<double>();
    return e;
}

json clamp_to_json(const ClampEntry& e, const std::vector<FeatureSpec>& schema) {
    std::vector<std::string> names;
    for (const auto& f : schema)
        if (!f.is_continuous()) names.push_back(f.name);
    json feature = e.feature < static_cast<int>(names.size()) ? json(names[e.feature]) : json(e.feature);
    return {{"state", e.state}, {"feature", feature}, {"value", e.category}, {"prob", e.probability}};
}

void check_clamp_against_cards(const std::vector<ClampEntry>& clamp, const std::vector<FeatureSpec>& schema,
                               int num_states) {
    std::vector<int> cards;
    for (const auto& f : schema)
        if (!f.is_continuous()) cards.push_back(f.kind == FeatureKind::binary ? 2 : f.cardinality);
    std::map<std::pair<int, int>, double> fixed;
    for (const auto& e : clamp) {
        if (e.state < 0 || e.state >= num_states)
            throw UsageError("clamp state " + std::to_string(e.state) + " out of range");
        if (e.category < 0 || e.category >= cards[e.feature])
            throw UsageError("clamp value " + std::to_string(e.category) + " out of range");
        if (e.probability < 0 || e.probability > 1)
            throw UsageError("clamp probability must lie in [0, 1]");
        fixed[{e.state, e.feature}] += e.probability;
        if (fixed[{e.state, e.feature}] > 1 + kProbabilityTolerance)
            throw UsageError("clamped probabilities exceed 1 for one table");
    }
}

json load_config(const std::string& path) {
    if (path.empty()) return json::object();
    std::ifstream in(path);
    if (!in) throw DataError("cannot read config " + path);
    try {
        json j = json::parse(in);
        if (!j.is_object()) throw DataError("config " + path + " is not a JSON object");
        return j;
    } catch (const json::exception& e) {
        throw DataError("config " + path + ": " + e.what());
    }
}

FitConfig fit_config_from(const json& config, const CommonOptions& common) {
    FitConfig fc;
    if (config.contains("fit")) {
        const auto& f = config.at("fit");
        try {
            if (f.contains("max_iterations")) fc.max_iterations = f.at("max_iterations").get<int>();
            if (f.contains("tolerance")) fc.tolerance = f.at("tolerance").get<double>();
            if (f.contains("restarts")) fc.restarts = f.at("restarts").get<int>();
            if (f.contains("seed")) fc.seed = f.at("seed").get<std::uint64_t>();
            if (f.contains("init")) {
                const auto s = f.at("init").get<std::string>();
                if (s == "kmeans") fc.init = InitStrategy::kmeans;
                else if (s == "random") fc.init = InitStrategy::random;
                else throw UsageError("unknown init strategy '" + s + "'");
            }
            if (f.contains("covariance")) {
                const auto s = f.at("covariance").get<std::string>();
                if (s == "full") fc.covariance = CovarianceType::full;
                else if (s == "diagonal") fc.covariance = CovarianceType::diagonal;
                else throw UsageError("unknown covariance type '" + s + "'");
            }
        } catch (const json::exception& e) {
            throw UsageError(std::string("config fit section: ") + e.what());
        }
    }
    if (common.seed) fc.seed = *common.seed;
    fc.num_threads = common.threads;
    try {
        fc.validate();
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    return fc;
}

json fit_config_json(const FitConfig& fc) {
    return {{"max_iterations", fc.max_iterations},
            {"tolerance", fc.tolerance},
            {"init", fc.init == InitStrategy::kmeans ? "kmeans" : "random"},
            {"restarts", fc.restarts},
            {"seed", fc.seed},
            {"covariance", fc.covariance == CovarianceType::full ? "full" : "diagonal"}};
}

// Clamp entries and sleep states: command-line values replace the config's.
Constraints constraints_from(const json& config, const CommandOptions& opt,
                             const std::vector<FeatureSpec>& schema) {
    Constraints c;
    const json section = config.contains("constraints") ? config.at("constraints") : json::object();
    try {
        if (!opt.clamps.empty()) {
            for (const auto& s : opt.clamps) c.fixed_entries.push_back(parse_clamp(s, schema));
        } else if (section.contains("clamp")) {
            for (const auto& j : section.at("clamp")) c.fixed_entries.push_back(clamp_from_json(j, schema));
        }
        if (!opt.sleep_states.empty()) {
            c.sleep_states = parse_int_list(opt.sleep_states, "sleep states");
        } else if (section.contains("sleep_states")) {
            c.sleep_states = section.at("sleep_states").get<std::vector<int>>();
        }
    } catch (const json::exception& e) {
        throw UsageError(std::string("config constraints section: ") + e.what());
    }
    return c;
}

void check_sleep_states(const std::vector<int>& states, int num_states) {
    for (int s : states)
        if (s < 0 || s >= num_states)
            throw UsageError("sleep state " + std::to_string(s) + " out of range for " +
                             std::to_string(num_states) + " states");
}

json constraints_json(const Constraints& c, const std::vector<FeatureSpec>& schema) {
    json clamp = json::array();
    for (const auto& e : c.fixed_entries) clamp.push_back(clamp_to_json(e, schema));
    return {{"clamp", clamp}, {"sleep_states", c.sleep_states}};
}

DatasetManifest require_manifest(const CommonOptions& common) {
    if (common.manifest.empty()) throw UsageError("--manifest is required");
    return load_manifest(common.manifest);
}

std::string safe_name(const std::string& id) {
    std::string out = id;
    for (char& ch : out)
        if (ch == '/' || ch == '\\' || ch == ':' || ch == ' ') ch = '_';
    return out;
}

std::vector<std::string> schema_names(const std::vector<FeatureSpec>& schema) {
    std::vector<std::string> names;
    for (const auto& f : schema) names.push_back(f.name);
    return names;
}

SleepLabels truth_for(const SleepLabels& all, const ObservationSequence& seq) {
    auto t = align_labels(all, seq.timestamps);
    t.source = LabelSource::wearable;
    return t;
}

bool any_labeled(const SleepLabels& labels) {
    for (auto v : labels.label)
        if (v != kUnlabeled) return true;
    return false;
}

// ---------------------------------------------------------------------------

void cmd_train(const CommandOptions& opt, RunReport& report) {
    const json config = load_config(opt.common.config);
    const auto manifest = require_manifest(opt.common);
    const auto schema = manifest.model_order();
    const FitConfig fc = fit_config_from(config, opt.common);
    int states = 0;
    if (opt.states) states = *opt.states;
    else if (config.contains("states")) states = config.at("states").get<int>();
    else throw UsageError("--states is required");
    if (states < 1) throw UsageError("--states must be >= 1");
    const Constraints cons = constraints_from(config, opt, schema);
    check_clamp_against_cards(cons.fixed_entries, schema, states);
    check_sleep_states(cons.sleep_states, states);

    report.seed = fc.seed;
    report.config = {{"manifest", opt.common.manifest},
                     {"states", states},
                     {"fit", fit_config_json(fc)},
                     {"constraints", constraints_json(cons, schema)}};

    // Labels are deliberately not read here.
    const auto sequences = ingest_csv(manifest);
    const FitResult result = fit(sequences, states, cons, fc);

    ModelDocument doc{result.params, schema, cons.sleep_states};
    save_model(fs::path(opt.common.out) / "model.json", doc);
    report.model_file = "model.json";

    const double L = result.log_likelihood_trace.back();
    const auto cards = result.params.cardinalities();
    const int k = count_parameters(states, result.params.num_continuous(), cards, fc.covariance,
                                   cons.fixed_entries);
    const double n = static_cast<double>(count_observed_cells(sequences));
    Index slots = 0;
    for (const auto& s : sequences) slots += s.length();
    report.details = {{"num_sequences", sequences.size()},
                      {"num_slots", slots},
                      {"observed_cells", n},
                      {"log_likelihood", L},
                      {"log_likelihood_trace", result.log_likelihood_trace},
                      {"iterations", result.log_likelihood_trace.size()},
                      {"converged", result.converged},
                      {"restart_index", result.restart_index},
                      {"restart_errors", result.restart_errors},
                      {"num_parameters", k},
                      {"bic", bic(L, k, n)},
                      {"aic", aic(L, k)}};
}

void cmd_select(const CommandOptions& opt, RunReport& report) {
    const json config = load_config(opt.common.config);
    const auto manifest = require_manifest(opt.common);
    const auto schema = manifest.model_order();
    const FitConfig fc = fit_config_from(config, opt.common);
    std::string range = opt.states_range;
    if (range.empty() && config.contains("states_range")) range = config.at("states_range").get<std::string>();
    if (range.empty()) throw UsageError("--states-range is required");
    const auto counts = parse_state_range(range);
    const Constraints cons = constraints_from(config, opt, schema);
    int largest = 0;
    for (int i : counts) largest = std::max(largest, i);
    check_clamp_against_cards(cons.fixed_entries, schema, largest);

    report.seed = fc.seed;
    report.config = {{"manifest", opt.common.manifest},
                     {"states_range", counts},
                     {"fit", fit_config_json(fc)},
                     {"constraints", constraints_json(cons, schema)}};

    const auto sequences = ingest_csv(manifest);
    const auto result = sweep_states(sequences, counts, cons, fc);
    const fs::path out(opt.common.out);
    write_selection_csv(out / "selection.csv", result);
    write_selection_plot_data(out / "selection_plot.csv", result);

    json rows = json::array();
    for (const auto& r : result.rows) {
        json row = {{"states", r.num_states},
                    {"log_likelihood", r.log_likelihood},
                    {"num_parameters", r.num_parameters},
                    {"bic", r.bic},
                    {"aic", r.aic}};
        row["error"] = r.error ? json(*r.error) : json(nullptr);
        rows.push_back(std::move(row));
    }
    report.details = {{"observed_cells", count_observed_cells(sequences)},
                      {"rows", rows},
                      {"chosen", result.chosen}};
    if (result.chosen == 0) throw NumericalError("every fit in the sweep failed");
}

void cmd_infer(const CommandOptions& opt, RunReport& report) {
    if (opt.model.empty()) throw UsageError("--model is required");
    const auto manifest = require_manifest(opt.common);
    const auto schema = manifest.model_order();
    const auto doc = load_model(opt.model);
    const auto& params = doc.params;
    if (!doc.features.empty() && schema_names(doc.features) != schema_names(schema))
        throw DataError("model feature schema does not match the manifest");
    Constraints cons;
    cons.sleep_states = opt.sleep_states.empty() ? doc.sleep_states
                                                 : parse_int_list(opt.sleep_states, "sleep states");
    if (cons.sleep_states.empty())
        throw UsageError("no sleep states: pass --sleep-states or train with them");
    check_sleep_states(cons.sleep_states, params.num_states);

    report.config = {{"manifest", opt.common.manifest},
                     {"model", opt.model},
                     {"sleep_states", cons.sleep_states}};
    report.model_file = opt.model;

    const auto sequences = ingest_csv(manifest);
    std::optional<SleepLabels> truth_all;
    if (!manifest.label_paths.empty()) truth_all = ingest_labels(manifest.label_paths, manifest.slot_minutes);

    const fs::path out(opt.common.out);
    std::vector<NamedLabels> predictions;
    json per = json::array();
    double total = 0;
    for (const auto& seq : sequences) {
        try {
            check_compatible(params, seq);
        } catch (const std::invalid_argument& e) {
            throw DataError(seq.id + ": " + e.what());
        }
        const Matrix logb = emission_log_likelihoods(params, seq);
        const auto post = forward_backward(params, logb);
        const auto path = viterbi(params, logb);
        auto predicted = binarize_states(path.path, params.num_states, cons, seq.timestamps);
        const std::string name = safe_name(seq.id);
        write_state_csv(out / "states" / (name + ".csv"), seq, path.path, post.gamma, predicted);
        std::optional<SleepLabels> truth;
        if (truth_all) truth = truth_for(*truth_all, seq);
        emit_plot_data(seq, post.gamma, predicted, truth ? &*truth : nullptr, out / "plot" / (name + ".csv"));
        if (truth && any_labeled(*truth))
            report.per_sequence.push_back({seq.id, evaluate(predicted, *truth)});
        per.push_back({{"sequence", seq.id},
                       {"slots", seq.length()},
                       {"log_likelihood", post.log_likelihood},
                       {"viterbi_log_probability", path.log_probability}});
        total += post.log_likelihood;
        predictions.push_back({seq.id, std::move(predicted)});
    }
    write_predictions(out / "predictions.csv", predictions);
    report.details = {{"sequences", per}, {"log_likelihood", total}};
}

void cmd_evaluate(const CommandOptions& opt, RunReport& report) {
    if (opt.pred.empty()) throw UsageError("--pred is required");
    std::vector<std::string> truth_paths = opt.truth;
    int slot_minutes = opt.slot_minutes;
    if (!opt.common.manifest.empty()) {
        const auto manifest = load_manifest(opt.common.manifest);
        slot_minutes = manifest.slot_minutes;
        if (truth_paths.empty()) truth_paths = manifest.label_paths;
    }
    if (truth_paths.empty()) throw UsageError("--truth is required");
    report.config = {{"pred", opt.pred}, {"truth", truth_paths}, {"slot_minutes", slot_minutes}};

    const auto predictions = read_predictions(opt.pred);
    const auto truth = ingest_labels(truth_paths, slot_minutes);
    std::vector<std::string> skipped;
    for (const auto& p : predictions) {
        auto aligned = align_labels(truth, p.labels.timestamps);
        if (!any_labeled(aligned)) {
            skipped.push_back(p.sequence);
            continue;
        }
        report.per_sequence.push_back({p.sequence, evaluate(p.labels, aligned)});
    }
    report.details = {{"skipped_sequences", skipped}};
    if (report.per_sequence.empty()) throw DataError("no predicted slot has a truth label");
}

void cmd_baseline(const CommandOptions& opt, RunReport& report) {
    const auto manifest = require_manifest(opt.common);
    const auto schema = manifest.model_order();
    const std::uint64_t seed = opt.common.seed.value_or(0);
    if (opt.imputer != 1 && opt.imputer != 2) throw UsageError("--imputer must be 1 or 2");
    const Imputer imputer = opt.imputer == 1 ? Imputer::mean_zero : Imputer::mean_mode;
    report.seed = seed;
    report.config = {{"manifest", opt.common.manifest}, {"method", opt.method}};

    const auto sequences = ingest_csv(manifest);
    std::optional<SleepLabels> truth_all;
    if (!manifest.label_paths.empty()) truth_all = ingest_labels(manifest.label_paths, manifest.slot_minutes);

    std::vector<SleepLabels> predicted;
    json details = json::object();
    if (opt.method == "kmeans" || opt.method == "gmm") {
        report.config["imputer"] = opt.imputer;
        int act = -1;
        for (std::size_t f = 0; f < schema.size(); ++f)
            if (schema[f].is_continuous() && schema[f].name == opt.actigraphy) act = static_cast<int>(f);
        if (act < 0) {
            if (schema.empty() || !schema.front().is_continuous())
                throw UsageError("no continuous feature to identify the asleep cluster");
            act = 0;
        }
        report.config["actigraphy_feature"] = schema[act].name;
        const auto model = opt.method == "kmeans" ? fit_kmeans_sleep(sequences, imputer, seed, act)
                                                  : fit_gmm_sleep(sequences, imputer, seed, act);
        predicted = predict_sleep(model, sequences);
        details["asleep_cluster"] = model.asleep_cluster;
    } else if (opt.method == "most_frequent") {
        if (!truth_all) throw UsageError("most_frequent needs label files in the manifest");
        for (const auto& seq : sequences) {
            auto p = dummy_most_frequent(truth_for(*truth_all, seq));
            p.timestamps = seq.timestamps;
            predicted.push_back(std::move(p));
        }
    } else if (opt.method == "uniform") {
        for (std::size_t n = 0; n < sequences.size(); ++n)
            predicted.push_back(dummy_uniform(derive_seed(seed, n), sequences[n].timestamps));
    } else {
        throw UsageError("unknown baseline method '" + opt.method + "'");
    }

    std::vector<NamedLabels> named;
    for (std::size_t n = 0; n < sequences.size(); ++n) {
        if (truth_all) {
            const auto truth = truth_for(*truth_all, sequences[n]);
            if (any_labeled(truth)) report.per_sequence.push_back({sequences[n].id, evaluate(predicted[n], truth)});
        }
        named.push_back({sequences[n].id, predicted[n]});
    }
    write_predictions(fs::path(opt.common.out) / "predictions.csv", named);
    report.details = details;
}

// "actigraphy=0.26,light=0.59" or "0.26,0.59,0.22,0.05" in model order.
std::vector<double> parse_missing(std::string_view spec, const std::vector<FeatureSpec>& schema) {
    std::vector<double> rates(schema.size(), 0.0);
    if (trim(spec).empty()) return rates;
    const auto pieces = split(spec, ',');
    if (spec.find('=') == std::string_view::npos) {
        if (pieces.size() != schema.size())
            throw UsageError("--missing lists " + std::to_string(pieces.size()) + " rates for " +
                             std::to_string(schema.size()) + " features");
        for (std::size_t f = 0; f < pieces.size(); ++f) rates[f] = parse_number<double>(pieces[f], "missing rate");
    } else {
        for (const auto& piece : pieces) {
            const auto eq = piece.find('=');
            if (eq == std::string::npos) throw UsageError("malformed --missing entry '" + piece + "'");
            const auto name = trim(piece.substr(0, eq));
            std::size_t f = 0;
            while (f < schema.size() && schema[f].name != name) ++f;
            if (f == schema.size()) throw UsageError("--missing names unknown feature '" + name + "'");
            rates[f] = parse_number<double>(piece.substr(eq + 1), "missing rate");
        }
    }
    for (double r : rates)
        if (!(r >= 0 && r <= 1)) throw UsageError("missing rates must lie in [0, 1]");
    return rates;
}

std::vector<FeatureSpec> default_schema(const ModelParameters& params) {
    std::vector<FeatureSpec> out;
    for (int g = 0; g < params.num_continuous(); ++g)
        out.push_back({"c" + std::to_string(g), FeatureKind::continuous, 2, false});
    const auto cards = params.cardinalities();
    for (std::size_t j = 0; j < cards.size(); ++j)
        out.push_back({"d" + std::to_string(j), cards[j] == 2 ? FeatureKind::binary : FeatureKind::categorical,
                       cards[j], false});
    return out;
}

void cmd_simulate(const CommandOptions& opt, RunReport& report) {
    if (opt.model.empty()) throw UsageError("--model is required");
    if (opt.days < 1) throw UsageError("--days must be >= 1");
    if (opt.slot_minutes < 1 || 1440 % opt.slot_minutes != 0)
        throw UsageError("--slot-minutes must divide a day");
    const auto doc = load_model(opt.model);
    const auto& params = doc.params;
    auto schema = doc.features.empty() ? default_schema(params) : doc.features;
    // Values are drawn in model space; re-ingestion must not transform them again.
    for (auto& f : schema) f.log1p = false;
    const auto rates = parse_missing(opt.missing, schema);
    Constraints cons;
    cons.sleep_states = opt.sleep_states.empty() ? doc.sleep_states
                                                 : parse_int_list(opt.sleep_states, "sleep states");
    check_sleep_states(cons.sleep_states, params.num_states);
    const std::uint64_t seed = opt.common.seed.value_or(0);
    const std::int64_t start = parse_timestamp(opt.start);
    const Index per_day = 1440 / opt.slot_minutes;

    report.seed = seed;
    report.model_file = opt.model;
    report.config = {{"model", opt.model},        {"days", opt.days},
                     {"missing", rates},          {"sleep_states", cons.sleep_states},
                     {"slot_minutes", opt.slot_minutes}, {"start", format_timestamp(start)}};

    const fs::path out(opt.common.out);
    DatasetManifest manifest;
    manifest.features = schema;
    manifest.slot_minutes = opt.slot_minutes;
    SleepLabels labels;
    std::vector<std::int64_t> state_counts(static_cast<std::size_t>(params.num_states), 0);
    for (int d = 0; d < opt.days; ++d) {
        char name[32];
        std::snprintf(name, sizeof name, "day_%03d", d);
        SampleOptions so;
        so.start_time = start + static_cast<std::int64_t>(d) * 86400;
        so.slot_seconds = static_cast<std::int64_t>(opt.slot_minutes) * 60;
        so.feature_names = schema_names(schema);
        so.id = name;
        const auto s = sample_sequence(params, per_day, rates, derive_seed(seed, static_cast<std::uint64_t>(d)), so);
        const std::string rel = std::string("data/") + name + ".csv";
        write_sequence_csv(out / rel, s.sequence);
        manifest.sequence_paths.push_back(rel);
        for (int st : s.states) ++state_counts[st];
        if (!cons.sleep_states.empty()) {
            const auto l = binarize_states(s.states, params.num_states, cons, s.sequence.timestamps);
            labels.timestamps.insert(labels.timestamps.end(), l.timestamps.begin(), l.timestamps.end());
            labels.label.insert(labels.label.end(), l.label.begin(), l.label.end());
        }
    }
    std::int64_t asleep = 0;
    if (!cons.sleep_states.empty()) {
        std::ofstream lf(out / "labels.csv", std::ios::binary);
        if (!lf) throw DataError("cannot write " + (out / "labels.csv").string());
        lf << "timestamp,label\n";
        for (std::size_t t = 0; t < labels.size(); ++t) {
            lf << format_timestamp(labels.timestamps[t]) << ',' << static_cast<int>(labels.label[t]) << '\n';
            asleep += labels.label[t];
        }
        manifest.label_paths.push_back("labels.csv");
    }
    save_manifest(out / "manifest.json", manifest);
    report.details = {{"slots_per_day", per_day},
                      {"files", manifest.sequence_paths},
                      {"state_counts", state_counts},
                      {"asleep_fraction", labels.size() ? static_cast<double>(asleep) / labels.size() : 0.0}};
}

// ---------------------------------------------------------------------------

void add_common(CLI::App* sub, CommonOptions& c, bool needs_manifest) {
    auto* m = sub->add_option("--manifest", c.manifest, "Dataset manifest (JSON)");
    if (needs_manifest) m->required();
    sub->add_option("--out", c.out, "Output directory")->capture_default_str();
    sub->add_option("--config", c.config, "JSON overriding fit settings and constraints");
    sub->add_option("--seed", c.seed, "Random seed");
    sub->add_option("--threads", c.threads, "E-step worker threads")->check(CLI::PositiveNumber)->capture_default_str();
}

std::string out_dir_from_args(const std::vector<std::string>& args) {
    for (std::size_t k = 0; k < args.size(); ++k) {
        if (args[k] == "--out" && k + 1 < args.size()) return args[k + 1];
        if (args[k].rfind("--out=", 0) == 0) return args[k].substr(6);
    }
    return ".";
}

json error_json(std::string_view kind, const std::string& message, int code) {
    return {{"kind", kind}, {"message", message}, {"exit_code", code}};
}

}  // namespace

int run(const std::vector<std::string>& args) {
    CLI::App app{"Heterogeneous HMM for sleep activity recognition"};
    app.require_subcommand(1);
    CommandOptions opt;

    auto* train = app.add_subcommand("train", "Fit an HHMM with Baum-Welch");
    add_common(train, opt.common, true);
    train->add_option("--states", opt.states, "Number of hidden states");
    train->add_option("--clamp", opt.clamps, "Fixed emission, e.g. state=4,feature=app_usage,value=1,prob=0");
    train->add_option("--sleep-states", opt.sleep_states, "Comma-separated states that mean asleep");

    auto* select = app.add_subcommand("select", "BIC/AIC sweep over the number of states");
    add_common(select, opt.common, true);
    select->add_option("--states-range", opt.states_range, "A..B or a comma list");
    select->add_option("--clamp", opt.clamps, "Fixed emission (dropped where the state does not exist)");
    select->add_option("--sleep-states", opt.sleep_states, "Comma-separated sleep states");

    auto* infer = app.add_subcommand("infer", "Decode states and sleep labels with a trained model");
    add_common(infer, opt.common, true);
    infer->add_option("--model", opt.model, "Model JSON")->required();
    infer->add_option("--sleep-states", opt.sleep_states, "Override the model's sleep states");

    auto* evaluate_cmd = app.add_subcommand("evaluate", "Score predictions against wearable labels");
    add_common(evaluate_cmd, opt.common, false);
    evaluate_cmd->add_option("--pred", opt.pred, "predictions.csv")->required();
    evaluate_cmd->add_option("--truth", opt.truth, "Label CSV (repeatable)");
    evaluate_cmd->add_option("--slot-minutes", opt.slot_minutes, "Slot length when no manifest is given")
        ->capture_default_str();

    auto* baseline = app.add_subcommand("baseline", "Run a comparison method");
    add_common(baseline, opt.common, true);
    baseline->add_option("--method", opt.method, "kmeans, gmm, most_frequent or uniform")
        ->check(CLI::IsMember({"kmeans", "gmm", "most_frequent", "uniform"}))
        ->capture_default_str();
    baseline->add_option("--imputer", opt.imputer, "1: mean/zero, 2: mean/mode")
        ->check(CLI::IsMember({1, 2}))
        ->capture_default_str();
    baseline->add_option("--actigraphy", opt.actigraphy, "Feature used to name the asleep cluster")
        ->capture_default_str();

    auto* simulate = app.add_subcommand("simulate", "Sample a synthetic cohort from a model");
    add_common(simulate, opt.common, false);
    simulate->add_option("--model", opt.model, "Model JSON")->required();
    simulate->add_option("--days", opt.days, "Number of day-long sequences")->required();
    simulate->add_option("--missing", opt.missing, "name=rate list or one rate per feature");
    simulate->add_option("--sleep-states", opt.sleep_states, "Override the model's sleep states");
    simulate->add_option("--slot-minutes", opt.slot_minutes, "Slot length")->capture_default_str();
    simulate->add_option("--start", opt.start, "Timestamp of the first slot")->capture_default_str();

    RunReport report;
    const auto started = std::chrono::steady_clock::now();
    std::string out_dir = out_dir_from_args(args);
    int code = kExitOk;

    auto fail = [&](std::string_view kind, const std::string& message, int exit_code) {
        report.error = error_json(kind, message, exit_code);
        std::cerr << json{{"error", *report.error}}.dump() << '\n';
        code = exit_code;
    };

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
        out_dir = opt.common.out;
        report.num_threads = opt.common.threads;
        CLI::App* sub = app.get_subcommands().front();
        report.command = sub->get_name();
        fs::create_directories(out_dir);
        if (sub == train) cmd_train(opt, report);
        else if (sub == select) cmd_select(opt, report);
        else if (sub == infer) cmd_infer(opt, report);
        else if (sub == evaluate_cmd) cmd_evaluate(opt, report);
        else if (sub == baseline) cmd_baseline(opt, report);
        else cmd_simulate(opt, report);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        if (report.command.empty() && !args.empty()) report.command = args.front();
        fail("usage", e.what(), kExitUsage);
    } catch (const UsageError& e) {
        fail("usage", e.what(), kExitUsage);
    } catch (const std::invalid_argument& e) {
        fail("usage", e.what(), kExitUsage);
    } catch (const DataError& e) {
        fail("data", e.what(), kExitData);
    } catch (const fs::filesystem_error& e) {
        fail("data", e.what(), kExitData);
    } catch (const NumericalError& e) {
        fail("numerical", e.what(), kExitNumerical);
    } catch (const std::exception& e) {
        fail("internal", e.what(), kExitFailure);
    }

    report.elapsed_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    try {
        write_report(fs::path(out_dir) / "report.json", report);
    } catch (const std::exception& e) {
        std::cerr << json{{"error", error_json("io", e.what(), kExitData)}}.dump() << '\n';
        if (code == kExitOk) code = kExitData;
    }
    return code;
}

int run(int argc, const char* const* argv) {
    std::vector<std::string> args;
    for (int k = 1; k < argc; ++k) args.emplace_back(argv[k]);
    return run(args);
}

}  // namespace hhmm::cli
