#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "c3det/core/random.hpp"
#include "c3det/core/types.hpp"
#include "c3det/model/detector.hpp"

namespace c3det {

struct CurvePoint {
    int clicks = 0;
    int session = 0;
    double map_value = 0.0;
};

struct CurveSummary {
    std::vector<int> clicks;
    std::vector<double> mean;
    std::vector<double> std;  // population standard deviation over sessions
    int sessions = 0;
};

struct EvalConfig {
    int sessions = 5;
    int max_clicks = 20;
    double iou_threshold = 0.5;
    std::uint64_t seed = 0;
    void validate() const;
};

/// Detections for one image given the inputs placed on it.
using InferFn = std::function<std::vector<Detection>(const LabeledImage&, std::span<const UserInput>)>;

InferFn detector_infer(Detector& det);
/// Base detector without inputs, then class rewrite of the clicked boxes.
InferFn passthrough_infer(Detector& base);

/// Rewrites, for every input, the highest-scoring detection whose box
/// contains the click: class set to the input's class and score to 1.
/// Unmatched clicks are ignored.
std::vector<Detection> passthrough(std::vector<Detection> dets, std::span<const UserInput> inputs);

/// mAP at `iou_threshold` over a set of images.
double dataset_map(std::span<const LabeledImage> images, const std::vector<std::vector<Detection>>& dets,
                   double iou_threshold);

/// One evaluation session: each image draws one click sequence from
/// `session_rng` (a child stream per image id); for t = 0..max_clicks every
/// image gets its first t clicks and mAP is computed over the whole set.
std::vector<CurvePoint> run_session(const InferFn& infer, std::span<const LabeledImage> test,
                                    const RandomSource& session_rng, int max_clicks, double iou_threshold,
                                    int session_index = 0);

/// Stream of session `s`; shared by every variant for paired comparisons.
RandomSource session_stream(std::uint64_t seed, int session);

struct ProtocolResult {
    std::vector<CurvePoint> points;
    CurveSummary summary;
};

ProtocolResult run_protocol(const InferFn& infer, std::span<const LabeledImage> test, const EvalConfig& cfg);

CurveSummary summarize(std::span<const CurvePoint> points);

/// "clicks,session,map"
void write_curve_csv(std::ostream& out, std::span<const CurvePoint> points);
/// "clicks,mean,std"
void write_summary_csv(std::ostream& out, const CurveSummary& s);

/// Variant name (including "passthrough") to checkpoint. Passthrough reads
/// the detector_only checkpoint.
using CheckpointMap = std::map<std::string, std::filesystem::path>;

/// Evaluates every listed variant with the same session streams, writing
/// `<variant>_curve.csv`, `<variant>_summary.csv`, `matrix.csv` and
/// `curves.svg` under `out_dir`.
std::map<std::string, CurveSummary> run_matrix(const std::vector<std::string>& variants,
                                               const CheckpointMap& checkpoints,
                                               std::span<const LabeledImage> test, const ClassCatalog& catalog,
                                               const EvalConfig& cfg, const std::filesystem::path& out_dir);

/// Line plot of mean mAP versus clicks, one line per variant.
std::string render_curves_svg(const std::map<std::string, CurveSummary>& curves);

}  // namespace c3det
