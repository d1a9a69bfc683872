#pragma once
// Dataset manifests, CSV ingestion onto the slot grid, label files,
// prediction files and the tidy plot-data exports.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "hhmm/core.hpp"
#include "hhmm/model_selection.hpp"

namespace hhmm {

enum class FeatureKind { continuous, binary, categorical };

struct FeatureSpec {
    std::string name;
    FeatureKind kind = FeatureKind::continuous;
    int cardinality = 2;     // discrete kinds only; binary is always 2
    bool log1p = false;      // continuous only, applied after slot averaging

    bool is_continuous() const { return kind == FeatureKind::continuous; }
};

struct DatasetManifest {
    std::vector<std::string> sequence_paths;
    std::vector<FeatureSpec> features;
    int slot_minutes = 10;
    std::vector<std::string> label_paths;
    double split_gap_hours = 6.0;  // runs of fully-missing slots longer than this split a file

    void validate() const;
    // Continuous features first (manifest order), then discrete ones.
    std::vector<FeatureSpec> model_order() const;
};

DatasetManifest manifest_from_json(const nlohmann::json& doc,
                                   const std::filesystem::path& base_dir = {});
nlohmann::json manifest_to_json(const DatasetManifest& manifest);
// Relative paths inside the file resolve against its directory.
DatasetManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);

FeatureKind parse_feature_kind(std::string_view text);
std::string to_string(FeatureKind kind);

// Buckets raw rows onto the slot grid: continuous cells average within a
// slot, binary cells take the max (any value > 0 is 1), categorical cells
// the most frequent category (ties to the lower one). Slots without rows
// inside a file's span become fully-missing rows; files split where a
// fully-missing run exceeds split_gap_hours.
std::vector<ObservationSequence> ingest_csv(const DatasetManifest& manifest);
std::vector<ObservationSequence> ingest_csv_file(const std::filesystem::path& path,
                                                 const DatasetManifest& manifest);

// `timestamp,stage` with stage in {awake, light, deep, rem}, or
// `timestamp,label` with 0/1. Per slot the binary majority wins, ties to
// asleep. Files are merged into one timeline.
SleepLabels ingest_labels(std::span<const std::string> paths, int slot_minutes = 10);

// Truth for each slot of `timestamps`; kUnlabeled where none exists.
SleepLabels align_labels(const SleepLabels& labels, std::span<const std::int64_t> timestamps);

int stage_to_label(std::string_view stage);

struct NamedLabels {
    std::string sequence;
    SleepLabels labels;
};

// `sequence,timestamp,label`.
void write_predictions(const std::filesystem::path& path, std::span<const NamedLabels> predictions);
std::vector<NamedLabels> read_predictions(const std::filesystem::path& path);

// Tidy per-slot table: timestamp, (value, observed flag) per feature,
// gamma per state, predicted label, and the truth label when given.
void emit_plot_data(const ObservationSequence& seq, const Matrix& gamma,
                    const SleepLabels& predicted, const SleepLabels* truth,
                    const std::filesystem::path& path);

// timestamp, state, gamma_0.., asleep.
void write_state_csv(const std::filesystem::path& path, const ObservationSequence& seq,
                     std::span<const int> states, const Matrix& gamma, const SleepLabels& predicted);

// I,loglik,k,bic,aic (+error) and a long-format criterion,I,value file.
void write_selection_csv(const std::filesystem::path& path, const SelectionResult& result);
void write_selection_plot_data(const std::filesystem::path& path, const SelectionResult& result);

// CSV of a sequence's feature columns (header `timestamp,<features>`),
// readable back through ingest_csv_file.
void write_sequence_csv(const std::filesystem::path& path, const ObservationSequence& seq);

// Shortest decimal text that parses back to the same double.
std::string format_double(double value);

}  // namespace hhmm
