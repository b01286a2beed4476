#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "c3det/core/dataset.hpp"
#include "c3det/core/dota_import.hpp"
#include "c3det/evalharness.hpp"
#include "c3det/gradcheck.hpp"
#include "c3det/server.hpp"
#include "c3det/synthgen.hpp"
#include "c3det/trainer.hpp"

using namespace c3det;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::string data;
    std::string checkpoint;
};

json load_config_file(const std::string& path) {
    if (path.empty()) return json::object();
    try {
        return json::parse(read_file(path));
    } catch (const json::exception& e) {
        throw Error("cli", "cannot parse config '" + path + "': " + e.what());
    }
}

ModelConfig resolve_model(const json& file, const std::string& variant) {
    const json m = file.value("model", json::object());
    ModelConfig c = ModelConfig::profile(m.value("profile", std::string("desk")));
    c = model_config_from_json(m, c);
    if (!variant.empty()) c.variant = parse_variant(variant);
    c.validate();
    return c;
}

TrainConfig resolve_train(const json& file, const Common& o, std::optional<double> fraction,
                          std::optional<int> epochs) {
    const json t = file.value("train", json::object());
    TrainConfig c = train_config_from_json(t, TrainConfig::profile(t.value("profile", std::string("desk"))));
    if (o.seed) c.seed = *o.seed;
    if (fraction) c.data_fraction = *fraction;
    if (epochs) c.epochs = *epochs;
    c.validate();
    return c;
}

EvalConfig resolve_eval(const json& file, const Common& o, std::optional<int> sessions, std::optional<int> clicks) {
    const json e = file.value("eval", json::object());
    EvalConfig c;
    c.sessions = e.value("sessions", c.sessions);
    c.max_clicks = e.value("max_clicks", c.max_clicks);
    c.iou_threshold = e.value("iou_threshold", c.iou_threshold);
    c.seed = e.value("seed", c.seed);
    if (o.seed) c.seed = *o.seed;
    if (sessions) c.sessions = *sessions;
    if (clicks) c.max_clicks = *clicks;
    c.validate();
    return c;
}

json eval_json(const EvalConfig& c) {
    return {{"sessions", c.sessions}, {"max_clicks", c.max_clicks}, {"iou_threshold", c.iou_threshold},
            {"seed", c.seed}};
}

void echo(const std::string& command, const json& resolved, const std::string& out_dir) {
    const json banner = {{"command", command}, {"resolved_config", resolved}};
    std::cout << "resolved config: " << banner.dump() << std::endl;
    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        write_file_atomic(fs::path(out_dir) / "resolved_config.json", banner.dump(2) + "\n");
    }
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

void require(const std::string& value, const char* flag) {
    if (value.empty()) throw CLI::RequiredError(flag);
}

std::vector<LabeledImage> load_split_or_empty(const fs::path& root, Split s) {
    if (!fs::exists(root / "labels" / split_name(s))) return {};
    return load_dataset(root, s);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Interactive tiny-object detection with class-wise collated correlation"};
    app.require_subcommand(1);
    Common o;
    auto common = [&](CLI::App* sub) {
        sub->add_option("--config", o.config, "JSON config file");
        sub->add_option("--seed", o.seed, "Seed for every random stream");
        sub->add_option("--out", o.out, "Output directory");
    };

    auto* gen = app.add_subcommand("gen-data", "Generate the synthetic dataset");
    common(gen);
    std::optional<int> n_train, n_val, n_test;
    gen->add_option("--train", n_train, "Training images");
    gen->add_option("--val", n_val, "Validation images");
    gen->add_option("--test", n_test, "Test images");

    auto* tr = app.add_subcommand("train", "Train one variant");
    common(tr);
    std::string variant;
    std::optional<double> fraction;
    std::optional<int> epochs;
    tr->add_option("--data", o.data, "Dataset root")->required();
    tr->add_option("--variant", variant, "Model variant");
    tr->add_option("--data-fraction", fraction, "Fraction of the training split");
    tr->add_option("--epochs", epochs, "Training epochs");

    auto* ev = app.add_subcommand("eval", "Run the click protocol on the test split");
    common(ev);
    std::optional<int> sessions, max_clicks;
    bool use_passthrough = false;
    ev->add_option("--data", o.data, "Dataset root")->required();
    ev->add_option("--checkpoint", o.checkpoint, "Model checkpoint")->required();
    ev->add_option("--sessions", sessions, "Evaluation sessions");
    ev->add_option("--max-clicks", max_clicks, "Clicks per image");
    ev->add_flag("--passthrough", use_passthrough, "Evaluate the passthrough baseline on this checkpoint");

    auto* ab = app.add_subcommand("ablate", "Train (if needed) and evaluate several variants with paired sessions");
    common(ab);
    std::string variants_arg = "full,no_uel,lf_only,c3_only,collate_then_correlate,early_fusion,"
                               "late_fusion_baseline,detector_only";
    ab->add_option("--data", o.data, "Dataset root")->required();
    ab->add_option("--variants", variants_arg, "Comma-separated variants (passthrough allowed)");
    ab->add_option("--sessions", sessions, "Evaluation sessions");
    ab->add_option("--max-clicks", max_clicks, "Clicks per image");
    ab->add_option("--data-fraction", fraction, "Fraction of the training split");
    ab->add_option("--epochs", epochs, "Training epochs");

    auto* sv = app.add_subcommand("serve", "Run the annotation server");
    common(sv);
    std::optional<int> port;
    sv->add_option("--data", o.data, "Dataset root (default $C3DET_DATA)");
    sv->add_option("--checkpoint", o.checkpoint, "Model checkpoint (default $C3DET_CHECKPOINT)");
    sv->add_option("--port", port, "Port (default $C3DET_PORT or 8080)");

    auto* im = app.add_subcommand("import-dota", "Convert DOTA text labels to the dataset format");
    common(im);
    std::string classes_arg, images_dir, split_arg = "train";
    im->add_option("--data", o.data, "Directory of DOTA label text files")->required();
    im->add_option("--classes", classes_arg, "Comma-separated class names (default: existing meta.json)");
    im->add_option("--images", images_dir, "Image directory (default: <data>/../images)");
    im->add_option("--split", split_arg, "Target split");

    auto* gc = app.add_subcommand("gradcheck", "Compare analytic and finite-difference gradients");
    common(gc);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        const json file = load_config_file(o.config);
        if (gen->parsed()) {
            require(o.out, "--out");
            GenConfig g = gen_config_from_json(file.value("generator", json::object()));
            if (o.seed) g.seed = *o.seed;
            if (n_train) g.train_count = *n_train;
            if (n_val) g.val_count = *n_val;
            if (n_test) g.test_count = *n_test;
            g.validate();
            echo("gen-data", {{"generator", to_json(g)}}, "");
            for (const auto& [split, r] : generate(g, o.out))
                std::cout << split_name(split) << ": " << r.images << " images, " << r.objects << " objects\n";
            return 0;
        }
        if (tr->parsed()) {
            require(o.out, "--out");
            const ModelConfig mc = resolve_model(file, variant);
            const TrainConfig tc = resolve_train(file, o, fraction, epochs);
            echo("train", {{"model", to_json(mc)}, {"train", to_json(tc)}, {"data", o.data}}, o.out);
            const auto meta = load_meta(o.data);
            const auto train_set = load_dataset(o.data, Split::Train);
            const auto val_set = load_split_or_empty(o.data, Split::Val);
            const auto t0 = std::chrono::steady_clock::now();
            const auto res = train(train_set, val_set, meta.classes, mc, tc, o.out, [&](const LossRow& r) {
                if (r.step % 50 == 0)
                    std::cout << "step " << r.step << " epoch " << r.epoch << " lr " << format_real(r.lr) << " loss "
                              << format_real(r.loss.total) << std::endl;
            });
            const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            std::cout << "trained " << res.log.size() << " steps in " << secs << " s; best val mAP "
                      << format_real(res.best_val_map) << " (epoch " << res.best_epoch << ")\n";
            return 0;
        }
        if (ev->parsed()) {
            require(o.out, "--out");
            const EvalConfig ec = resolve_eval(file, o, sessions, max_clicks);
            echo("eval", {{"eval", eval_json(ec)}, {"checkpoint", o.checkpoint}, {"data", o.data},
                          {"passthrough", use_passthrough}},
                 o.out);
            const auto meta = load_meta(o.data);
            const auto test = load_dataset(o.data, Split::Test);
            Detector det = Detector::load(o.checkpoint, meta.classes);
            const auto r = run_protocol(use_passthrough ? passthrough_infer(det) : detector_infer(det), test, ec);
            std::ostringstream curve, summary;
            write_curve_csv(curve, r.points);
            write_summary_csv(summary, r.summary);
            write_file_atomic(fs::path(o.out) / "curve.csv", curve.str());
            write_file_atomic(fs::path(o.out) / "summary.csv", summary.str());
            std::cout << summary.str();
            return 0;
        }
        if (ab->parsed()) {
            require(o.out, "--out");
            const TrainConfig tc = resolve_train(file, o, fraction, epochs);
            const EvalConfig ec = resolve_eval(file, o, sessions, max_clicks);
            const auto names = split_list(variants_arg);
            json models = json::object();
            for (const auto& v : names)
                if (v != "passthrough") models[v] = to_json(resolve_model(file, v));
            echo("ablate", {{"models", models}, {"train", to_json(tc)}, {"eval", eval_json(ec)}, {"data", o.data},
                            {"variants", names}},
                 o.out);
            const auto meta = load_meta(o.data);
            const auto train_set = load_dataset(o.data, Split::Train);
            const auto val_set = load_split_or_empty(o.data, Split::Val);
            const auto test = load_dataset(o.data, Split::Test);
            CheckpointMap ckpts;
            for (const auto& v : names) {
                const std::string key = v == "passthrough" ? "detector_only" : v;
                if (ckpts.count(key)) continue;
                const fs::path dir = fs::path(o.out) / key;
                if (!fs::exists(dir / "final.ckpt")) {
                    std::cout << "training " << key << std::endl;
                    train(train_set, val_set, meta.classes, resolve_model(file, key), tc, dir);
                }
                ckpts[key] = dir / "final.ckpt";
            }
            const auto curves = run_matrix(names, ckpts, test, meta.classes, ec, o.out);
            for (const auto& [v, s] : curves)
                std::cout << v << ": mAP@0.5 " << format_real(s.mean.front()) << " at 0 clicks, "
                          << format_real(s.mean.back()) << " at " << s.clicks.back() << " clicks\n";
            return 0;
        }
        if (sv->parsed()) {
            ServerConfig sc = server_config_from_env();
            if (!o.data.empty()) sc.data_root = o.data;
            if (!o.checkpoint.empty()) sc.checkpoint = o.checkpoint;
            if (!o.out.empty()) sc.state_root = o.out;
            if (port) sc.port = *port;
            echo("serve", to_json(sc), "");
            AnnotationServer server(sc);
            server.listen();
            return 0;
        }
        if (im->parsed()) {
            require(o.out, "--out");
            DotaImportOptions opt;
            opt.classes = split_list(classes_arg);
            if (!images_dir.empty()) opt.images_dir = images_dir;
            opt.split = parse_split(split_arg);
            echo("import-dota", {{"data", o.data}, {"out", o.out}, {"classes", opt.classes}, {"split", split_arg}},
                 "");
            const auto rep = import_dota(o.data, o.out, opt);
            int unknown = 0;
            for (const auto& [name, n] : rep.skipped_unknown_class) unknown += n;
            std::cout << "imported " << rep.files << " files, " << rep.objects << " objects; skipped " << unknown
                      << " unknown-class and " << rep.malformed.size() << " malformed lines\n";
            for (const auto& m : rep.malformed) std::cerr << m.file << ":" << m.line << ": " << m.reason << "\n";
            return 0;
        }
        if (gc->parsed()) {
            const std::uint64_t seed = o.seed.value_or(0);
            echo("gradcheck", {{"seed", seed}}, "");
            bool ok = true;
            for (const auto& r : run_gradchecks(seed)) {
                std::printf("%-24s max rel err %.3e over %d coords  %s\n", r.name.c_str(), r.max_rel_error,
                            r.checked, r.passed ? "ok" : "FAIL");
                ok = ok && r.passed;
            }
            return ok ? 0 : 2;
        }
    } catch (const Error& e) {
        std::cerr << "error [" << e.subsystem() << "]: " << e.what() << "\n";
        return 2;
    } catch (const CLI::ParseError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error [runtime]: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
