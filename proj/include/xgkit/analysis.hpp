#pragma once

#include "xgkit/backbone.hpp"
#include "xgkit/evaluation.hpp"

#include <Eigen/Dense>

#include <map>
#include <string>
#include <vector>

namespace xgkit {

// Scores are x100, as in EvalReport.
struct CurvePoint {
    std::int64_t step = 0;
    double sp_rg_lsum = 0.0;
    double lid_target = 0.0;
    double lid_en_analog = 0.0;
    double ascii = 0.0;

    bool operator==(const CurvePoint&) const = default;
};

using Curves = std::map<std::string, std::vector<CurvePoint>>; // language -> points by step

// Evaluates every checkpoint on every language's set. ctx.target_language is
// replaced by each set's language in turn.
Curves learning_curves(const std::vector<Checkpoint>& checkpoints,
                       const std::map<std::string, std::vector<SummExample>>& eval_sets, const EvalContext& ctx);

// One row per (step, language), sorted by step then language.
std::string curves_csv(const Curves& curves);
void write_curves_csv(const Curves& curves, const std::string& path);
Curves read_curves_csv(const std::string& path);

struct SimilarityMatrix {
    std::vector<std::string> labels;
    Eigen::MatrixXd values;

    std::size_t size() const { return labels.size(); }
    double at(const std::string& a, const std::string& b) const;
};

// Multi-row prompts are mean-pooled over rows before taking cosines.
SimilarityMatrix prompt_similarity_matrix(const std::map<std::string, Prompt>& prompts);

using Partition = std::vector<std::vector<std::string>>; // each cluster sorted, clusters by first label

// Average linkage on 1 - cosine. Labels are processed in sorted order and
// ties between equally close pairs go to the lexicographically first pair,
// so the result does not depend on the order of m.labels.
Partition agglomerative_cluster(const SimilarityMatrix& m, int k);

// Leaves of the full average-linkage dendrogram; each merge puts the subtree
// holding the smaller label first.
std::vector<std::string> cluster_leaf_order(const SimilarityMatrix& m);

SimilarityMatrix reorder(const SimilarityMatrix& m, const std::vector<std::string>& order);

// Writes an SVG heatmap (blue -1, white 0, red +1) at svg_path and the
// reordered matrix as CSV at csv_path.
void export_heatmap(const SimilarityMatrix& m, const std::vector<std::string>& order, const std::string& svg_path,
                    const std::string& csv_path);
std::string heatmap_svg(const SimilarityMatrix& m);
std::string matrix_csv(const SimilarityMatrix& m);
SimilarityMatrix read_matrix_csv(const std::string& path);

} // namespace xgkit
