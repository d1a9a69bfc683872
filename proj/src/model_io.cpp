#include "hhmm/model_io.hpp"

#include <fstream>

namespace hhmm {

using nlohmann::json;

namespace {

json vector_json(const Vector& v) {
    json out = json::array();
    for (Index k = 0; k < v.size(); ++k) out.push_back(v(k));
    return out;
}

json matrix_json(const Matrix& m) {
    json out = json::array();
    for (Index r = 0; r < m.rows(); ++r) out.push_back(vector_json(m.row(r).transpose()));
    return out;
}

Vector vector_from(const json& j) {
    Vector v(static_cast<Index>(j.size()));
    for (std::size_t k = 0; k < j.size(); ++k) v(static_cast<Index>(k)) = j.at(k).get<double>();
    return v;
}

Matrix matrix_from(const json& j, Index cols) {
    Matrix m(static_cast<Index>(j.size()), cols);
    for (std::size_t r = 0; r < j.size(); ++r) {
        if (static_cast<Index>(j.at(r).size()) != cols) throw DataError("model: ragged matrix");
        for (Index c = 0; c < cols; ++c) m(static_cast<Index>(r), c) = j.at(r).at(c).get<double>();
    }
    return m;
}

}  // namespace

json model_to_json(const ModelDocument& doc) {
    const auto& p = doc.params;
    json out;
    out["version"] = kModelFormatVersion;
    out["num_states"] = p.num_states;
    out["pi"] = vector_json(p.pi);
    out["trans"] = matrix_json(p.trans);
    json gaussians = json::array();
    for (const auto& g : p.gaussians) gaussians.push_back({{"mean", vector_json(g.mean)}, {"cov", matrix_json(g.cov)}});
    out["gaussians"] = std::move(gaussians);
    json discretes = json::array();
    for (const auto& per_state : p.discretes) {
        json tables = json::array();
        for (const auto& d : per_state) tables.push_back(vector_json(d));
        discretes.push_back(std::move(tables));
    }
    out["discretes"] = std::move(discretes);
    json clamp = json::array();
    for (const auto& c : p.clamp) {
        clamp.push_back({{"state", c.state}, {"feature", c.feature}, {"category", c.category},
                         {"probability", c.probability}});
    }
    out["clamp"] = std::move(clamp);
    json features = json::array();
    for (const auto& f : doc.features) {
        json jf{{"name", f.name}, {"kind", to_string(f.kind)}};
        if (!f.is_continuous()) jf["cardinality"] = f.cardinality;
        if (f.log1p) jf["log1p"] = true;
        features.push_back(std::move(jf));
    }
    out["feature_schema"] = std::move(features);
    out["sleep_states"] = doc.sleep_states;
    return out;
}

ModelDocument model_from_json(const json& j) {
    ModelDocument doc;
    try {
        const int version = j.at("version").get<int>();
        if (version != kModelFormatVersion) {
            throw DataError("model: unsupported version " + std::to_string(version) + " (expected " +
                            std::to_string(kModelFormatVersion) + ")");
        }
        auto& p = doc.params;
        p.num_states = j.at("num_states").get<int>();
        p.pi = vector_from(j.at("pi"));
        p.trans = matrix_from(j.at("trans"), p.num_states);
        for (const auto& g : j.at("gaussians")) {
            GaussianEmission e;
            e.mean = vector_from(g.at("mean"));
            e.cov = matrix_from(g.at("cov"), e.mean.size());
            p.gaussians.push_back(std::move(e));
        }
        for (const auto& per_state : j.at("discretes")) {
            std::vector<Vector> tables;
            for (const auto& d : per_state) tables.push_back(vector_from(d));
            p.discretes.push_back(std::move(tables));
        }
        for (const auto& c : j.at("clamp")) {
            p.clamp.push_back({c.at("state").get<int>(), c.at("feature").get<int>(),
                               c.at("category").get<int>(), c.at("probability").get<double>()});
        }
        if (j.contains("feature_schema")) {
            for (const auto& f : j.at("feature_schema")) {
                FeatureSpec spec;
                spec.name = f.at("name").get<std::string>();
                spec.kind = parse_feature_kind(f.at("kind").get<std::string>());
                spec.cardinality = f.value("cardinality", 2);
                spec.log1p = f.value("log1p", false);
                doc.features.push_back(std::move(spec));
            }
        }
        if (j.contains("sleep_states")) doc.sleep_states = j.at("sleep_states").get<std::vector<int>>();
    } catch (const json::exception& e) {
        throw DataError(std::string("model: malformed document: ") + e.what());
    }
    const auto verdict = validate_model(doc.params);
    if (!verdict.ok()) throw DataError("model: " + verdict.summary());
    for (int s : doc.sleep_states) {
        if (s < 0 || s >= doc.params.num_states) throw DataError("model: sleep state out of range");
    }
    return doc;
}

void save_model(const std::filesystem::path& path, const ModelDocument& doc) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << model_to_json(doc).dump(2) << '\n';
}

ModelDocument load_model(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open model " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw DataError("model " + path.string() + ": " + e.what());
    }
    return model_from_json(j);
}

}  // namespace hhmm
