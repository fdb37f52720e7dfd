#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "crossview/gradnet.hpp"
#include "crossview/scenegen.hpp"

namespace crossview::evalsuite {

// One flattened patch per row, matching the patch store layout.
Eigen::MatrixXd patch_matrix(const std::vector<scenegen::Patch>& patches);

// Attribute names: "category", "color", "attr0".."attr{B-1}".
int attribute_value(const scenegen::Patch& patch, const std::string& attribute);
int attribute_cardinality(const scenegen::GenConfig& config, const std::string& attribute);
std::vector<std::string> attribute_names(const scenegen::GenConfig& config);

// Embeddings of one dataset split plus the labels of one attribute.
struct LabeledEmbeddings {
    Eigen::MatrixXd embeddings;
    std::vector<int> labels;
    int num_values = 0;
};

LabeledEmbeddings embed_split(const gradnet::EmbeddingNet& net, const scenegen::Dataset& dataset,
                              scenegen::Split split, const std::string& attribute);

// Reference embedding source per object: the patch of its first appearance.
struct ReferenceGallery {
    std::vector<int> object_ids;
    std::vector<scenegen::Patch> patches;
};

ReferenceGallery build_gallery(const std::vector<scenegen::PairBatch>& frames);

// Fraction of detections in eval_frames assigned a wrong identity by
// nearest-gallery matching (gallery re-embedded with the same net).
double identification_error(const gradnet::EmbeddingNet& net, const ReferenceGallery& gallery,
                            const std::vector<scenegen::PairBatch>& eval_frames);

struct ProbeResult {
    std::string attribute;
    std::string probe_kind;  // "linear" or "nearest_neighbor"
    double error_rate = 0.0;
    double chance_rate = 0.0;  // 1 - 1/num_values
};

// Softmax regression on frozen embeddings: full-batch gradient descent,
// 2000 steps, learning rates {1e-1, 1e-2, 1e-3}, best by validation error.
ProbeResult linear_probe(const LabeledEmbeddings& train, const LabeledEmbeddings& val,
                         const LabeledEmbeddings& test, const std::string& attribute);

// 1-nearest-neighbor label transfer from train to eval.
ProbeResult nn_probe(const LabeledEmbeddings& train, const LabeledEmbeddings& eval,
                     const std::string& attribute);

struct CorrespondenceResult {
    double attribute_error = 0.0;        // (category, color) mismatch of mined neighbor
    double object_matching_error = 0.0;  // neighbor is a different object
    int num_anchors = 0;
};

// Cross-view nearest-neighbor check over ground-truth-aligned pair batches;
// anchors taken from both views.
CorrespondenceResult correspondence_eval(const gradnet::EmbeddingNet& net,
                                         const std::vector<scenegen::PairBatch>& batches);

// Coordinates along the top-2 variance directions of the centered set; sign
// fixed so each direction's first nonzero loading is positive. Rank-deficient
// directions are zero-padded.
Eigen::MatrixXd project_2d(const Eigen::MatrixXd& embeddings);

struct ReportRecord {
    std::string protocol;
    std::string mode;
    std::string attribute;  // empty = omitted from the JSON record
    double error = 0.0;
    std::optional<double> chance;
    std::string config_digest;
    std::uint64_t seed = 0;
};

std::string report_json_line(const ReportRecord& record);
void append_report(const std::filesystem::path& path, const ReportRecord& record);
std::string report_csv_header();  // protocol,mode,attribute,error,chance
std::string report_csv_row(const ReportRecord& record);

}  // namespace crossview::evalsuite
