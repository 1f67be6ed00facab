#include "xgkit/analysis.hpp"

#include "xgkit/errors.hpp"
#include "xgkit/fileio.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

namespace xgkit {

namespace {

std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(sep, start);
        out.push_back(line.substr(start, pos - start));
        if (pos == std::string::npos) {
            return out;
        }
        start = pos + 1;
    }
}

double parse_real(const std::string& s, const std::string& where) {
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
        throw FormatError(where + ": bad number '" + s + "'");
    }
    return v;
}

std::vector<std::string> lines_of(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (!line.empty()) {
            out.push_back(line);
        }
    }
    return out;
}

void check_matrix(const SimilarityMatrix& m) {
    const auto n = static_cast<Eigen::Index>(m.labels.size());
    if (m.values.rows() != n || m.values.cols() != n) {
        throw InputError("similarity matrix shape does not match its " + std::to_string(n) + " labels");
    }
    std::set<std::string> seen;
    for (const auto& l : m.labels) {
        if (!seen.insert(l).second) {
            throw InputError("duplicate label '" + l + "' in similarity matrix");
        }
    }
}

std::size_t index_of(const SimilarityMatrix& m, const std::string& label) {
    const auto it = std::find(m.labels.begin(), m.labels.end(), label);
    if (it == m.labels.end()) {
        throw InputError("unknown label '" + label + "'");
    }
    return static_cast<std::size_t>(it - m.labels.begin());
}

struct Merge {
    std::vector<std::vector<int>> members; // indices into sorted labels
    std::vector<std::vector<int>> leaves;  // same sets in dendrogram order
};

// Runs average-linkage merges until `k` clusters remain. Indices refer to the
// labels in sorted order, which makes every floating-point sum order-stable.
Merge run_linkage(const SimilarityMatrix& m, int k, std::vector<std::string>& sorted) {
    check_matrix(m);
    const int n = static_cast<int>(m.labels.size());
    if (k < 1 || k > n) {
        throw ConfigError("cluster count k=" + std::to_string(k) + " must be in [1, " + std::to_string(n) + "]");
    }
    sorted = m.labels;
    std::sort(sorted.begin(), sorted.end());
    std::vector<std::size_t> orig(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        orig[static_cast<std::size_t>(i)] = index_of(m, sorted[static_cast<std::size_t>(i)]);
    }
    auto dist = [&](int i, int j) {
        const int a = std::min(i, j);
        const int b = std::max(i, j);
        return 1.0 - m.values(static_cast<Eigen::Index>(orig[static_cast<std::size_t>(a)]),
                              static_cast<Eigen::Index>(orig[static_cast<std::size_t>(b)]));
    };
    Merge st;
    for (int i = 0; i < n; ++i) {
        st.members.push_back({i});
        st.leaves.push_back({i});
    }
    // Clusters stay ordered by their smallest member.
    while (static_cast<int>(st.members.size()) > k) {
        std::size_t best_a = 0;
        std::size_t best_b = 1;
        double best = 0.0;
        bool have = false;
        for (std::size_t a = 0; a < st.members.size(); ++a) {
            for (std::size_t b = a + 1; b < st.members.size(); ++b) {
                double sum = 0.0;
                for (int i : st.members[a]) {
                    for (int j : st.members[b]) {
                        sum += dist(i, j);
                    }
                }
                const double avg =
                    sum / static_cast<double>(st.members[a].size() * st.members[b].size());
                if (!have || avg < best) {
                    best = avg;
                    best_a = a;
                    best_b = b;
                    have = true;
                }
            }
        }
        auto& ma = st.members[best_a];
        ma.insert(ma.end(), st.members[best_b].begin(), st.members[best_b].end());
        std::sort(ma.begin(), ma.end());
        auto& la = st.leaves[best_a];
        la.insert(la.end(), st.leaves[best_b].begin(), st.leaves[best_b].end());
        st.members.erase(st.members.begin() + static_cast<std::ptrdiff_t>(best_b));
        st.leaves.erase(st.leaves.begin() + static_cast<std::ptrdiff_t>(best_b));
    }
    return st;
}

} // namespace

Curves learning_curves(const std::vector<Checkpoint>& checkpoints,
                       const std::map<std::string, std::vector<SummExample>>& eval_sets, const EvalContext& ctx) {
    if (checkpoints.empty()) {
        throw InputError("learning curves need at least one checkpoint");
    }
    if (eval_sets.empty()) {
        throw InputError("learning curves need at least one evaluation set");
    }
    std::vector<const Checkpoint*> order;
    for (const auto& c : checkpoints) {
        order.push_back(&c);
    }
    std::stable_sort(order.begin(), order.end(), [](const Checkpoint* a, const Checkpoint* b) { return a->step < b->step; });
    for (std::size_t i = 1; i < order.size(); ++i) {
        if (order[i]->step == order[i - 1]->step) {
            throw InputError("two checkpoints share step " + std::to_string(order[i]->step));
        }
    }
    Curves curves;
    for (const auto& [lang, data] : eval_sets) {
        if (data.empty()) {
            throw InputError("evaluation set for '" + lang + "' is empty");
        }
        if (ctx.lid == nullptr || !ctx.lid->knows(lang)) {
            throw InputError("LID model has no language '" + lang + "'");
        }
        EvalContext c = ctx;
        c.target_language = lang;
        auto& points = curves[lang];
        for (const Checkpoint* ckpt : order) {
            const EvalReport rep = evaluate_checkpoint(*ckpt, data, c);
            const auto& s = rep.per_language.at(lang);
            points.push_back({ckpt->step, s.sp_rg_lsum, s.lid_target, s.lid_en, s.ascii});
        }
    }
    return curves;
}

std::string curves_csv(const Curves& curves) {
    struct Row {
        std::int64_t step;
        const std::string* lang;
        const CurvePoint* p;
    };
    std::vector<Row> rows;
    for (const auto& [lang, points] : curves) {
        for (const auto& p : points) {
            rows.push_back({p.step, &lang, &p});
        }
    }
    std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
        return a.step != b.step ? a.step < b.step : *a.lang < *b.lang;
    });
    std::string out = "step,language,sp_rg_lsum,lid_target,lid_en,ascii\n";
    for (const auto& r : rows) {
        out += std::to_string(r.step) + "," + *r.lang + "," + format_real(r.p->sp_rg_lsum) + "," +
               format_real(r.p->lid_target) + "," + format_real(r.p->lid_en_analog) + "," +
               format_real(r.p->ascii) + "\n";
    }
    return out;
}

void write_curves_csv(const Curves& curves, const std::string& path) { write_file(path, curves_csv(curves)); }

Curves read_curves_csv(const std::string& path) {
    const auto lines = lines_of(read_file(path));
    if (lines.empty() || lines[0] != "step,language,sp_rg_lsum,lid_target,lid_en,ascii") {
        throw FormatError(path + ": not a curves file");
    }
    Curves curves;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const auto cells = split(lines[i], ',');
        const std::string where = path + ":" + std::to_string(i + 1);
        if (cells.size() != 6) {
            throw FormatError(where + ": expected 6 columns");
        }
        CurvePoint p;
        p.step = static_cast<std::int64_t>(parse_real(cells[0], where));
        p.sp_rg_lsum = parse_real(cells[2], where);
        p.lid_target = parse_real(cells[3], where);
        p.lid_en_analog = parse_real(cells[4], where);
        p.ascii = parse_real(cells[5], where);
        auto& points = curves[cells[1]];
        if (!points.empty() && points.back().step >= p.step) {
            throw FormatError(where + ": steps must increase within a language");
        }
        points.push_back(p);
    }
    return curves;
}

double SimilarityMatrix::at(const std::string& a, const std::string& b) const {
    return values(static_cast<Eigen::Index>(index_of(*this, a)), static_cast<Eigen::Index>(index_of(*this, b)));
}

SimilarityMatrix prompt_similarity_matrix(const std::map<std::string, Prompt>& prompts) {
    if (prompts.size() < 2) {
        throw InputError("similarity needs at least two prompts");
    }
    const Prompt& first = prompts.begin()->second;
    std::vector<Eigen::VectorXd> pooled;
    SimilarityMatrix m;
    for (const auto& [label, p] : prompts) {
        if (p.length() != first.length() || p.d_model() != first.d_model()) {
            throw InputError("prompt '" + label + "' has a different shape from '" + prompts.begin()->first + "'");
        }
        Eigen::VectorXd v = p.values().colwise().mean().transpose();
        if (v.norm() == 0.0) {
            throw InputError("prompt '" + label + "' has zero norm; cosine is undefined");
        }
        m.labels.push_back(label);
        pooled.push_back(std::move(v));
    }
    const auto n = static_cast<Eigen::Index>(pooled.size());
    m.values = Eigen::MatrixXd::Identity(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i + 1; j < n; ++j) {
            const auto& a = pooled[static_cast<std::size_t>(i)];
            const auto& b = pooled[static_cast<std::size_t>(j)];
            const double c = std::clamp(a.dot(b) / (a.norm() * b.norm()), -1.0, 1.0);
            m.values(i, j) = c;
            m.values(j, i) = c;
        }
    }
    return m;
}

Partition agglomerative_cluster(const SimilarityMatrix& m, int k) {
    std::vector<std::string> sorted;
    const Merge st = run_linkage(m, k, sorted);
    Partition out;
    for (const auto& c : st.members) {
        std::vector<std::string> names;
        for (int i : c) {
            names.push_back(sorted[static_cast<std::size_t>(i)]);
        }
        out.push_back(std::move(names));
    }
    return out;
}

std::vector<std::string> cluster_leaf_order(const SimilarityMatrix& m) {
    std::vector<std::string> sorted;
    const Merge st = run_linkage(m, 1, sorted);
    std::vector<std::string> out;
    for (int i : st.leaves.front()) {
        out.push_back(sorted[static_cast<std::size_t>(i)]);
    }
    return out;
}

SimilarityMatrix reorder(const SimilarityMatrix& m, const std::vector<std::string>& order) {
    check_matrix(m);
    if (order.size() != m.labels.size() ||
        std::set<std::string>(order.begin(), order.end()) != std::set<std::string>(m.labels.begin(), m.labels.end())) {
        throw InputError("order must be a permutation of the matrix labels");
    }
    SimilarityMatrix out;
    out.labels = order;
    const auto n = static_cast<Eigen::Index>(order.size());
    out.values.resize(n, n);
    std::vector<Eigen::Index> idx;
    for (const auto& l : order) {
        idx.push_back(static_cast<Eigen::Index>(index_of(m, l)));
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            out.values(i, j) = m.values(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
        }
    }
    return out;
}

std::string matrix_csv(const SimilarityMatrix& m) {
    check_matrix(m);
    for (const auto& l : m.labels) {
        if (l.empty() || l.find_first_of(",\"\n\r") != std::string::npos) {
            throw InputError("label '" + l + "' cannot be written to CSV");
        }
    }
    std::string out = "label";
    for (const auto& l : m.labels) {
        out += "," + l;
    }
    out += "\n";
    for (Eigen::Index i = 0; i < m.values.rows(); ++i) {
        out += m.labels[static_cast<std::size_t>(i)];
        for (Eigen::Index j = 0; j < m.values.cols(); ++j) {
            out += "," + format_real(m.values(i, j));
        }
        out += "\n";
    }
    return out;
}

SimilarityMatrix read_matrix_csv(const std::string& path) {
    const auto lines = lines_of(read_file(path));
    if (lines.empty()) {
        throw FormatError(path + ": empty matrix file");
    }
    const auto header = split(lines[0], ',');
    if (header.empty() || header[0] != "label") {
        throw FormatError(path + ": missing header");
    }
    SimilarityMatrix m;
    m.labels.assign(header.begin() + 1, header.end());
    const auto n = static_cast<Eigen::Index>(m.labels.size());
    if (static_cast<Eigen::Index>(lines.size()) != n + 1) {
        throw FormatError(path + ": expected " + std::to_string(n) + " rows");
    }
    m.values.resize(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto cells = split(lines[static_cast<std::size_t>(i + 1)], ',');
        const std::string where = path + ":" + std::to_string(i + 2);
        if (static_cast<Eigen::Index>(cells.size()) != n + 1 || cells[0] != m.labels[static_cast<std::size_t>(i)]) {
            throw FormatError(where + ": row does not match header");
        }
        for (Eigen::Index j = 0; j < n; ++j) {
            m.values(i, j) = parse_real(cells[static_cast<std::size_t>(j + 1)], where);
        }
    }
    return m;
}

std::string heatmap_svg(const SimilarityMatrix& m) {
    check_matrix(m);
    constexpr int cell = 28;
    constexpr int margin = 64;
    const int n = static_cast<int>(m.labels.size());
    const int side = margin + n * cell + 8;
    auto escape = [](const std::string& s) {
        std::string o;
        for (char c : s) {
            switch (c) {
            case '&': o += "&amp;"; break;
            case '<': o += "&lt;"; break;
            case '>': o += "&gt;"; break;
            case '"': o += "&quot;"; break;
            default: o += c;
            }
        }
        return o;
    };
    // Linear ramp: -1 blue, 0 white, +1 red.
    auto color = [](double v) {
        const double t = std::clamp(v, -1.0, 1.0);
        const double r0 = t < 0 ? 59 : 180;
        const double g0 = t < 0 ? 76 : 4;
        const double b0 = t < 0 ? 192 : 38;
        const double a = std::abs(t);
        auto mix = [a](double c) { return static_cast<int>(std::lround(255.0 + (c - 255.0) * a)); };
        return "rgb(" + std::to_string(mix(r0)) + "," + std::to_string(mix(g0)) + "," + std::to_string(mix(b0)) + ")";
    };
    std::string out = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(side) + "\" height=\"" +
                      std::to_string(side) + "\" font-family=\"sans-serif\" font-size=\"11\">\n";
    for (int i = 0; i < n; ++i) {
        const std::string label = escape(m.labels[static_cast<std::size_t>(i)]);
        const int c = margin + i * cell + cell / 2;
        out += "<text class=\"row-label\" x=\"" + std::to_string(margin - 4) + "\" y=\"" + std::to_string(c + 4) +
               "\" text-anchor=\"end\">" + label + "</text>\n";
        out += "<text class=\"col-label\" x=\"" + std::to_string(c) + "\" y=\"" + std::to_string(margin - 6) +
               "\" text-anchor=\"middle\">" + label + "</text>\n";
    }
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            const double v = m.values(i, j);
            out += "<rect class=\"cell\" x=\"" + std::to_string(margin + j * cell) + "\" y=\"" +
                   std::to_string(margin + i * cell) + "\" width=\"" + std::to_string(cell) + "\" height=\"" +
                   std::to_string(cell) + "\" fill=\"" + color(v) + "\"><title>" + format_real(v) +
                   "</title></rect>\n";
        }
    }
    out += "</svg>\n";
    return out;
}

void export_heatmap(const SimilarityMatrix& m, const std::vector<std::string>& order, const std::string& svg_path,
                    const std::string& csv_path) {
    const SimilarityMatrix r = reorder(m, order);
    const std::string svg = heatmap_svg(r);
    const std::string csv = matrix_csv(r);
    write_file(svg_path, svg);
    write_file(csv_path, csv);
}

} // namespace xgkit
