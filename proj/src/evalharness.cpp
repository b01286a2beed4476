#include "c3det/evalharness.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "c3det/core/dataset.hpp"
#include "c3det/metrics.hpp"
#include "c3det/simulate.hpp"

namespace c3det {

void EvalConfig::validate() const {
    if (sessions < 1) throw Error("evalharness", "sessions must be at least 1");
    if (max_clicks < 0) throw Error("evalharness", "max_clicks must be non-negative");
    if (!(iou_threshold > 0.0 && iou_threshold <= 1.0)) throw Error("evalharness", "iou threshold must lie in (0,1]");
}

InferFn detector_infer(Detector& det) {
    return [&det](const LabeledImage& img, std::span<const UserInput> inputs) { return det.detect(img.pixels, inputs); };
}

InferFn passthrough_infer(Detector& base) {
    return [&base](const LabeledImage& img, std::span<const UserInput> inputs) {
        return passthrough(base.detect(img.pixels, {}), inputs);
    };
}

std::vector<Detection> passthrough(std::vector<Detection> dets, std::span<const UserInput> inputs) {
    for (const auto& u : inputs) {
        int best = -1;
        for (std::size_t i = 0; i < dets.size(); ++i) {
            if (!dets[i].box.contains(u.x, u.y)) continue;
            if (best < 0 || dets[i].score > dets[static_cast<std::size_t>(best)].score) best = static_cast<int>(i);
        }
        if (best < 0) continue;
        dets[static_cast<std::size_t>(best)].class_id = u.class_id;
        dets[static_cast<std::size_t>(best)].score = 1.0;
    }
    return dets;
}

double dataset_map(std::span<const LabeledImage> images, const std::vector<std::vector<Detection>>& dets,
                   double iou_threshold) {
    DetectionsById d;
    GroundTruthById g;
    for (std::size_t i = 0; i < images.size(); ++i) {
        d[images[i].image_id] = dets[i];
        g[images[i].image_id] = images[i].objects;
    }
    const double thr[] = {iou_threshold};
    return map_at(d, g, thr).map_value;
}

RandomSource session_stream(std::uint64_t seed, int session) {
    return RandomSource(seed, "eval/session" + std::to_string(session));
}

std::vector<CurvePoint> run_session(const InferFn& infer, std::span<const LabeledImage> test,
                                    const RandomSource& session_rng, int max_clicks, double iou_threshold,
                                    int session_index) {
    SimConfig sim;
    sim.eval_max_clicks = max_clicks;
    std::vector<std::vector<UserInput>> clicks(test.size());
    for (std::size_t i = 0; i < test.size(); ++i) {
        RandomSource r = session_rng.fork(test[i].image_id);
        clicks[i] = session_clicks(test[i], r, sim);
    }
    std::vector<std::vector<Detection>> dets(test.size());
    std::vector<int> used(test.size(), -1);
    std::vector<CurvePoint> out;
    for (int t = 0; t <= max_clicks; ++t) {
        for (std::size_t i = 0; i < test.size(); ++i) {
            const int n = std::min<int>(t, static_cast<int>(clicks[i].size()));
            if (n == used[i]) continue;  // prefix unchanged: same prediction
            dets[i] = infer(test[i], std::span<const UserInput>(clicks[i].data(), static_cast<std::size_t>(n)));
            used[i] = n;
        }
        out.push_back({t, session_index, dataset_map(test, dets, iou_threshold)});
    }
    return out;
}

CurveSummary summarize(std::span<const CurvePoint> points) {
    std::map<int, std::vector<double>> by_clicks;
    for (const auto& p : points) by_clicks[p.clicks].push_back(p.map_value);
    CurveSummary s;
    for (const auto& [clicks, values] : by_clicks) {
        double mean = 0.0;
        for (double v : values) mean += v;
        mean /= static_cast<double>(values.size());
        double var = 0.0;
        for (double v : values) var += (v - mean) * (v - mean);
        var /= static_cast<double>(values.size());
        s.clicks.push_back(clicks);
        s.mean.push_back(mean);
        s.std.push_back(std::sqrt(var));
        s.sessions = static_cast<int>(values.size());
    }
    return s;
}

ProtocolResult run_protocol(const InferFn& infer, std::span<const LabeledImage> test, const EvalConfig& cfg) {
    cfg.validate();
    ProtocolResult r;
    for (int s = 0; s < cfg.sessions; ++s) {
        auto pts = run_session(infer, test, session_stream(cfg.seed, s), cfg.max_clicks, cfg.iou_threshold, s);
        r.points.insert(r.points.end(), pts.begin(), pts.end());
    }
    r.summary = summarize(r.points);
    return r;
}

void write_curve_csv(std::ostream& out, std::span<const CurvePoint> points) {
    out << "clicks,session,map\n";
    for (const auto& p : points) out << p.clicks << ',' << p.session << ',' << format_real(p.map_value) << '\n';
}

void write_summary_csv(std::ostream& out, const CurveSummary& s) {
    out << "clicks,mean,std\n";
    for (std::size_t i = 0; i < s.clicks.size(); ++i)
        out << s.clicks[i] << ',' << format_real(s.mean[i]) << ',' << format_real(s.std[i]) << '\n';
}

std::map<std::string, CurveSummary> run_matrix(const std::vector<std::string>& variants,
                                               const CheckpointMap& checkpoints,
                                               std::span<const LabeledImage> test, const ClassCatalog& catalog,
                                               const EvalConfig& cfg, const std::filesystem::path& out_dir) {
    cfg.validate();
    auto checkpoint_for = [&](const std::string& v) {
        const std::string key = v == "passthrough" ? "detector_only" : v;
        auto it = checkpoints.find(key);
        if (it == checkpoints.end()) throw Error("evalharness", "no checkpoint for variant '" + key + "'");
        return it->second;
    };
    for (const auto& v : variants) checkpoint_for(v);

    std::filesystem::create_directories(out_dir);
    std::map<std::string, CurveSummary> out;
    std::ostringstream matrix;
    matrix << "variant,clicks,mean,std\n";
    for (const auto& v : variants) {
        Detector det = Detector::load(checkpoint_for(v), catalog);
        const InferFn fn = v == "passthrough" ? passthrough_infer(det) : detector_infer(det);
        const auto r = run_protocol(fn, test, cfg);
        std::ostringstream curve, summary;
        write_curve_csv(curve, r.points);
        write_summary_csv(summary, r.summary);
        write_file_atomic(out_dir / (v + "_curve.csv"), curve.str());
        write_file_atomic(out_dir / (v + "_summary.csv"), summary.str());
        for (std::size_t i = 0; i < r.summary.clicks.size(); ++i)
            matrix << v << ',' << r.summary.clicks[i] << ',' << format_real(r.summary.mean[i]) << ','
                   << format_real(r.summary.std[i]) << '\n';
        out[v] = r.summary;
    }
    write_file_atomic(out_dir / "matrix.csv", matrix.str());
    write_file_atomic(out_dir / "curves.svg", render_curves_svg(out));
    return out;
}

std::string render_curves_svg(const std::map<std::string, CurveSummary>& curves) {
    constexpr double W = 640, H = 420, L = 60, R = 170, T = 20, B = 50;
    static const char* palette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
    int max_clicks = 1;
    for (const auto& [_, s] : curves)
        for (int c : s.clicks) max_clicks = std::max(max_clicks, c);
    auto px = [&](double clicks) { return L + (W - L - R) * clicks / max_clicks; };
    auto py = [&](double map) { return T + (H - T - B) * (1.0 - map); };
    std::ostringstream o;
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
    o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    o << "<g stroke=\"black\" fill=\"none\"><line x1=\"" << L << "\" y1=\"" << py(0) << "\" x2=\"" << px(max_clicks)
      << "\" y2=\"" << py(0) << "\"/><line x1=\"" << L << "\" y1=\"" << py(0) << "\" x2=\"" << L << "\" y2=\""
      << py(1) << "\"/></g>\n";
    o << "<g font-family=\"sans-serif\" font-size=\"11\">\n";
    for (int i = 0; i <= 10; ++i)
        o << "<text x=\"" << L - 8 << "\" y=\"" << py(i / 10.0) + 4 << "\" text-anchor=\"end\">"
          << format_real(i / 10.0) << "</text>\n";
    for (int c = 0; c <= max_clicks; c += std::max(1, max_clicks / 10))
        o << "<text x=\"" << px(c) << "\" y=\"" << py(0) + 16 << "\" text-anchor=\"middle\">" << c << "</text>\n";
    o << "<text x=\"" << px(max_clicks / 2.0) << "\" y=\"" << H - 10 << "\" text-anchor=\"middle\">clicks</text>\n";
    o << "<text x=\"14\" y=\"" << py(0.5) << "\" transform=\"rotate(-90 14 " << py(0.5)
      << ")\" text-anchor=\"middle\">mAP@0.5</text>\n";
    int k = 0;
    for (const auto& [name, s] : curves) {
        const char* col = palette[k % 10];
        o << "<polyline fill=\"none\" stroke=\"" << col << "\" stroke-width=\"2\" points=\"";
        for (std::size_t i = 0; i < s.clicks.size(); ++i) o << px(s.clicks[i]) << ',' << py(s.mean[i]) << ' ';
        o << "\"/>\n";
        const double ly = T + 16.0 * k + 10;
        o << "<line x1=\"" << W - R + 10 << "\" y1=\"" << ly << "\" x2=\"" << W - R + 30 << "\" y2=\"" << ly
          << "\" stroke=\"" << col << "\" stroke-width=\"2\"/><text x=\"" << W - R + 36 << "\" y=\"" << ly + 4
          << "\">" << name << "</text>\n";
        ++k;
    }
    o << "</g>\n</svg>\n";
    return o.str();
}

}  // namespace c3det
