// garmnet: prepare / synth / train / eval / predict / visualize.
//
// Exit codes: 0 ok, 1 usage or config error, 2 data error, 3 numerical failure.

#include <CLI11.hpp>
#include <json.hpp>
#include <opencv2/imgproc.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "garmnet/config.hpp"
#include "garmnet/ctu.hpp"
#include "garmnet/evaluation.hpp"
#include "garmnet/synthetic.hpp"
#include "garmnet/training.hpp"
#include "garmnet/version.hpp"

using namespace garmnet;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class UsageError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

void write_text(const fs::path& p, const std::string& text) {
    std::ofstream os(p, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + p.string());
    os << text;
}

// Everything needed to reproduce the run; no timestamps so reruns compare equal.
void write_run_file(const fs::path& out, const std::string& command, const std::vector<std::string>& args,
                    json extra = json::object()) {
    json j{{"command", command}, {"version", kVersion}, {"arguments", args}};
    j.update(extra);
    write_text(out / "run.json", j.dump(2) + "\n");
}

bool on_off(const std::string& s) {
    if (s == "on" || s == "true" || s == "1") return true;
    if (s == "off" || s == "false" || s == "0") return false;
    throw UsageError("expected on or off, got '" + s + "'");
}

std::vector<Example> load_checked(const DatasetManifest& m, const NetworkConfig& net, const std::string& what) {
    if (m.records.empty()) throw DataError(what + " manifest has no examples");
    std::vector<Example> ex;
    ex.reserve(m.size());
    for (const auto& r : m.records) {
        try {
            ex.push_back(load_example(m, r, net.backbone.input_size));
        } catch (const std::runtime_error& e) {
            throw DataError(r.id + ": " + e.what());
        }
        const auto errs = validate_example(ex.back(), net.backbone.input_size, net.n_landmarks, net.n_garments);
        if (!errs.empty()) throw DataError(r.id + ": " + errs.front());
    }
    return ex;
}

// ---------------------------------------------------------------- prepare

struct PrepareArgs {
    std::string ctu, mapping, manifest, out;
    std::size_t val_count = 300;
    std::uint64_t seed = 1;
};

int run_prepare(const PrepareArgs& a, const std::vector<std::string>& args) {
    if (a.ctu.empty() == a.manifest.empty()) throw UsageError("prepare needs exactly one of --ctu or --manifest");
    DatasetManifest all;
    std::vector<std::string> errors;
    if (!a.ctu.empty()) {
        const CtuMapping map = a.mapping.empty() ? CtuMapping{} : CtuMapping::load(a.mapping);
        auto res = load_ctu_dataset(a.ctu, map);
        all = std::move(res.manifest);
        errors = std::move(res.errors);
    } else {
        all = read_manifest(a.manifest);
        if (all.records.empty()) throw DataError("no examples in " + a.manifest);
    }
    if (a.val_count >= all.size())
        throw DataError("validation count " + std::to_string(a.val_count) + " leaves no training examples (" +
                        std::to_string(all.size()) + " parsed)");

    const fs::path out = a.out;
    fs::create_directories(out);
    // Re-root image paths at the output directory so the manifests can live there.
    const fs::path out_abs = fs::absolute(out).lexically_normal();
    for (auto& r : all.records)
        r.image = fs::absolute(resolve_image(all, r)).lexically_normal().lexically_relative(out_abs).generic_string();
    all.base_dir = out;

    auto [train, val] = split_dataset(all, a.val_count, a.seed);
    write_manifest(train, out / "train.jsonl");
    write_manifest(val, out / "val.jsonl");
    write_text(out / "taxonomy.json", all.taxonomy.to_json().dump(2) + "\n");
    std::string err_text;
    for (const auto& e : errors) err_text += e + "\n";
    write_text(out / "errors.txt", err_text);
    for (const auto& e : errors) std::cerr << "warning: skipped " << e << "\n";
    write_run_file(out, "prepare", args,
                   {{"seed", a.seed}, {"val_count", a.val_count}, {"records", all.size()}, {"rejected", errors.size()}});
    std::cout << "prepared " << all.size() << " examples: " << train.size() << " train, " << val.size()
              << " validation";
    if (!errors.empty()) std::cout << " (" << errors.size() << " rejected, see errors.txt)";
    std::cout << "\n";
    return 0;
}

// ---------------------------------------------------------------- synth

struct SynthArgs {
    std::string config, out, templates;
    std::optional<std::size_t> n;
    std::optional<int> size;
    std::optional<std::uint64_t> seed;
};

int run_synth(const SynthArgs& a, const std::vector<std::string>& args) {
    SyntheticSceneConfig cfg;
    if (!a.config.empty()) {
        YAML::Node node;
        try {
            node = YAML::LoadFile(a.config);
        } catch (const YAML::Exception& e) {
            throw ConfigError("cannot read config " + a.config + ": " + e.what());
        }
        cfg = synthetic_config_from_json(yaml_to_json(node));
    }
    if (a.n) cfg.n_examples = *a.n;
    if (a.size) cfg.image_size = *a.size;
    if (a.seed) cfg.seed = *a.seed;
    if (!a.templates.empty()) {
        cfg.templates.clear();
        std::stringstream ss(a.templates);
        for (std::string t; std::getline(ss, t, ',');)
            if (!t.empty()) cfg.templates.push_back(t);
    }
    cfg = synthetic_config_from_json(synthetic_config_to_json(cfg));  // re-validate overrides

    const auto ds = generate_synthetic(cfg);
    write_synthetic(ds, a.out);
    write_run_file(a.out, "synth", args, {{"config", synthetic_config_to_json(cfg)}, {"seed", cfg.seed}});
    std::cout << "wrote " << ds.images.size() << " scenes and manifest.jsonl to " << a.out << "\n";
    return 0;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
    std::string config, train, val, out, variant, spatial, backbone, device = "cpu", precision = "float";
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> epochs, batch_size;
    bool strict = false;
};

TrainConfig effective_train_config(const TrainArgs& a) {
    TrainConfig cfg = a.config.empty() ? TrainConfig{} : load_train_config(a.config);
    json over = json::object();
    if (a.seed) over["seeds"] = {{"data", *a.seed}, {"init", *a.seed + 1}, {"sampling", *a.seed + 2}};
    if (!a.variant.empty()) over["network"]["variant"] = a.variant;
    if (!a.spatial.empty()) over["network"]["spatial_constraint"] = on_off(a.spatial);
    if (!a.backbone.empty()) over["network"]["backbone"]["kind"] = a.backbone;
    if (a.strict) over["strict_determinism"] = true;
    if (a.epochs) over["epochs"] = *a.epochs;
    if (a.batch_size) over["batch_size"] = *a.batch_size;
    return train_config_from_json(over, cfg);
}

template <typename T>
int train_with(TrainConfig cfg, const TrainArgs& a, const std::vector<std::string>& args) {
    const DatasetManifest tm = read_manifest(a.train);
    cfg.network.n_landmarks = tm.taxonomy.n_landmarks();
    cfg.network.n_garments = tm.taxonomy.n_garments();
    const auto train_set = load_checked(tm, cfg.network, "training");
    std::vector<Example> val_set;
    if (!a.val.empty()) {
        const DatasetManifest vm = read_manifest(a.val);
        if (!(vm.taxonomy == tm.taxonomy)) throw DataError("training and validation taxonomies differ");
        val_set = load_checked(vm, cfg.network, "validation");
    }

    const fs::path out = a.out;
    fs::create_directories(out);
    write_text(out / "config.yaml", train_config_to_yaml(cfg));
    write_run_file(out, "train", args,
                   {{"config", train_config_to_json(cfg)},
                    {"seeds", {{"data", cfg.data_seed}, {"init", cfg.init_seed}, {"sampling", cfg.sampling_seed}}},
                    {"precision", a.precision},
                    {"device", a.device},
                    {"train_examples", train_set.size()},
                    {"val_examples", val_set.size()}});

    const auto log = [&](const EpochRecord& r) {
        std::printf("epoch %zu/%zu  train %.4f", r.epoch, cfg.epochs, r.train.total);
        if (r.validation) std::printf("  val %.4f", r.validation->total);
        if (r.metrics)
            std::printf("  mAP %.1f  cls %.1f%%  cls+loc %.1f%%", r.metrics->mean_ap,
                        r.metrics->garment_classification_error, r.metrics->garment_cls_loc_error);
        std::printf("  (%.1f s)\n", r.seconds);
        std::fflush(stdout);
    };
    const auto res = train<T>(cfg, train_set, val_set, tm.taxonomy, out, log);

    const auto& eval_set = val_set.empty() ? train_set : val_set;
    const EvalReport rep = evaluate_model(res.best_model, eval_set, cfg.match, tm.taxonomy.landmarks);
    json rj = rep.to_json();
    rj["split"] = val_set.empty() ? "train" : "validation";
    rj["best_epoch"] = res.best_epoch;
    write_text(out / "report.json", rj.dump(2) + "\n");
    std::cout << "best epoch " << res.best_epoch << " (" << rj["split"].get<std::string>() << ")\n"
              << rep.to_table();
    return 0;
}

int run_train(const TrainArgs& a, const std::vector<std::string>& args) {
    if (a.device != "cpu") throw UsageError("unsupported device '" + a.device + "' (only cpu is available)");
    const TrainConfig cfg = effective_train_config(a);
    if (a.precision == "double") return train_with<double>(cfg, a, args);
    if (a.precision == "float") return train_with<float>(cfg, a, args);
    throw UsageError("precision must be float or double");
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
    std::string checkpoint, manifest, out, rule, precision = "float";
    std::optional<double> radius, landmark_iou, garment_iou;
};

template <typename T>
int eval_with(const EvalArgs& a, const std::vector<std::string>& args) {
    const auto ck = load_checkpoint<T>(a.checkpoint);
    const DatasetManifest m = read_manifest(a.manifest);
    if (!(m.taxonomy == ck.taxonomy)) throw DataError("manifest taxonomy differs from the checkpoint's");
    const auto ex = load_checked(m, ck.model.config(), "evaluation");
    MatchRule rule;
    rule.box_side = ck.model.config().box_side;
    if (!a.rule.empty()) {
        if (a.rule != "box_iou" && a.rule != "radius") throw UsageError("landmark rule must be box_iou or radius");
        rule.kind = a.rule == "box_iou" ? MatchKind::box_iou : MatchKind::radius;
    }
    if (a.radius) rule.radius = *a.radius;
    if (a.landmark_iou) rule.landmark_iou = *a.landmark_iou;
    if (a.garment_iou) rule.garment_iou = *a.garment_iou;
    const EvalReport rep = evaluate_model(ck.model, ex, rule, ck.taxonomy.landmarks);
    std::cout << rep.to_table();
    if (!a.out.empty()) {
        fs::create_directories(a.out);
        write_text(fs::path(a.out) / "report.json", rep.to_json().dump(2) + "\n");
        write_run_file(a.out, "eval", args);
    }
    return 0;
}

// ---------------------------------------------------------------- predict

struct PredictArgs {
    std::string checkpoint, manifest, out, precision = "float";
    std::vector<std::string> images;
};

json prediction_to_json(const PredictionSet& p, const Example& e, const Taxonomy& tax) {
    const Box box = p.garment.box.scaled(1.0 / e.scale_x, 1.0 / e.scale_y);
    json g{{"class", tax.garments.at(std::size_t(p.garment.class_id))},
           {"class_id", p.garment.class_id},
           {"probs", p.garment.probs},
           {"box", {box.x_min, box.y_min, box.x_max, box.y_max}}};
    json lms = json::array();
    for (const auto& l : p.landmarks)
        lms.push_back({{"class", tax.landmarks.at(std::size_t(l.class_id))},
                       {"class_id", l.class_id},
                       {"x", l.point.x / e.scale_x},
                       {"y", l.point.y / e.scale_y},
                       {"confidence", l.confidence}});
    return {{"garment", g}, {"landmarks", lms}};
}

template <typename T>
int predict_with(const PredictArgs& a, const std::vector<std::string>& args) {
    if (a.manifest.empty() == a.images.empty()) throw UsageError("predict needs --manifest or --image (not both)");
    const auto ck = load_checkpoint<T>(a.checkpoint);
    const auto& net = ck.model.config();
    const int input = net.backbone.input_size;

    struct Item {
        std::string id;
        fs::path image;
    };
    std::vector<Item> items;
    if (!a.manifest.empty()) {
        const DatasetManifest m = read_manifest(a.manifest);
        if (!(m.taxonomy == ck.taxonomy)) throw DataError("manifest taxonomy differs from the checkpoint's");
        for (const auto& r : m.records) items.push_back({r.id, resolve_image(m, r)});
    } else {
        for (const auto& p : a.images) items.push_back({fs::path(p).stem().string(), p});
    }

    fs::create_directories(a.out);
    std::ostringstream lines;
    for (const auto& it : items) {
        Image img;
        try {
            img = load_image(it.image);
        } catch (const std::runtime_error& e) {
            throw DataError(it.id + ": " + e.what());
        }
        ManifestRecord r;
        r.id = it.id;
        r.width = img.width;
        r.height = img.height;
        const Example e = make_example(r, img, input);
        const PredictionSet p = ck.model.predict(image_to_tensor<T>(e.image, net.backbone.mean, net.backbone.std));
        json j{{"id", it.id},
               {"image", fs::absolute(it.image).lexically_normal().generic_string()},
               {"width", img.width},
               {"height", img.height}};
        j.update(prediction_to_json(p, e, ck.taxonomy));
        lines << j.dump() << "\n";
    }
    write_text(fs::path(a.out) / "predictions.jsonl", lines.str());
    write_run_file(a.out, "predict", args, {{"checkpoint_network", network_config_to_json(net)}});
    std::cout << "wrote " << items.size() << " predictions to " << (fs::path(a.out) / "predictions.jsonl").string()
              << "\n";
    return 0;
}

// ---------------------------------------------------------------- visualize

struct VisualizeArgs {
    std::string predictions, manifest, out, ground_truth = "on";
};

cv::Scalar class_color(int c, int n) {
    cv::Mat hsv(1, 1, CV_8UC3, cv::Scalar(180.0 * c / std::max(1, n), 220, 255)), bgr;
    cv::cvtColor(hsv, bgr, cv::COLOR_HSV2BGR);
    const auto v = bgr.at<cv::Vec3b>(0, 0);
    return {double(v[0]), double(v[1]), double(v[2])};
}

void label(cv::Mat& m, const std::string& text, cv::Point at, const cv::Scalar& color, double scale) {
    cv::putText(m, text, at, cv::FONT_HERSHEY_SIMPLEX, scale, cv::Scalar(0, 0, 0), 3, cv::LINE_8);
    cv::putText(m, text, at, cv::FONT_HERSHEY_SIMPLEX, scale, color, 1, cv::LINE_8);
}

int run_visualize(const VisualizeArgs& a, const std::vector<std::string>& args) {
    const bool show_truth = on_off(a.ground_truth);
    std::map<std::string, ManifestRecord> truth;
    Taxonomy tax = Taxonomy::default_taxonomy();
    if (!a.manifest.empty()) {
        const DatasetManifest m = read_manifest(a.manifest);
        tax = m.taxonomy;
        for (const auto& r : m.records) truth[r.id] = r;
    }
    std::ifstream is(a.predictions);
    if (!is) throw DataError("cannot open predictions " + a.predictions);
    const fs::path pred_dir = fs::path(a.predictions).parent_path();
    fs::create_directories(a.out);

    std::size_t total = 0, drawn = 0;
    for (std::string line; std::getline(is, line);) {
        if (line.empty()) continue;
        ++total;
        const json p = json::parse(line);
        const std::string id = p.at("id");
        fs::path img_path = p.at("image").get<std::string>();
        if (img_path.is_relative() && !fs::exists(img_path)) img_path = pred_dir / img_path;
        cv::Mat m = cv::imread(img_path.string(), cv::IMREAD_COLOR);
        if (m.empty()) {
            std::cerr << "warning: " << id << ": cannot read " << img_path.string() << ", skipped\n";
            continue;
        }
        // Small rasters are enlarged so labels stay legible.
        const int zoom = std::max(1, 384 / std::max(m.cols, m.rows));
        if (zoom > 1) cv::resize(m, m, {}, zoom, zoom, cv::INTER_NEAREST);
        const auto pt = [zoom](double x, double y) { return cv::Point(int(std::lround(x * zoom)), int(std::lround(y * zoom))); };
        const double font = 0.4;
        const int n_lm = int(tax.landmarks.size());

        if (show_truth && truth.count(id)) {
            const auto& r = truth.at(id);
            const Box& b = r.garment_box;
            cv::rectangle(m, pt(b.x_min, b.y_min), pt(b.x_max, b.y_max), cv::Scalar(255, 255, 255), 1, cv::LINE_8);
            for (const auto& l : r.landmarks) {
                const cv::Point c = pt(l.point.x, l.point.y);
                cv::drawMarker(m, c, cv::Scalar(255, 255, 255), cv::MARKER_CROSS, 9, 1, cv::LINE_8);
                cv::circle(m, c, 6, class_color(l.class_id, n_lm), 1, cv::LINE_8);
            }
        }
        const json& g = p.at("garment");
        const auto box = g.at("box").get<std::vector<double>>();
        cv::rectangle(m, pt(box[0], box[1]), pt(box[2], box[3]), cv::Scalar(0, 200, 0), 2, cv::LINE_8);
        const auto probs = g.at("probs").get<std::vector<double>>();
        std::ostringstream gl;
        gl << g.at("class").get<std::string>() << " " << std::fixed << std::setprecision(2)
           << probs.at(g.at("class_id").get<std::size_t>());
        label(m, gl.str(), pt(box[0], box[1]) + cv::Point(2, 12), cv::Scalar(0, 220, 0), font);
        for (const auto& l : p.at("landmarks")) {
            const cv::Point c = pt(l.at("x").get<double>(), l.at("y").get<double>());
            const cv::Scalar col = class_color(l.at("class_id").get<int>(), n_lm);
            cv::circle(m, c, 3, col, cv::FILLED, cv::LINE_8);
            std::ostringstream ll;
            ll << l.at("class").get<std::string>() << " " << std::fixed << std::setprecision(2)
               << l.at("confidence").get<double>();
            label(m, ll.str(), c + cv::Point(4, -4), col, font * 0.8);
        }
        if (!cv::imwrite((fs::path(a.out) / (id + ".png")).string(), m, {cv::IMWRITE_PNG_COMPRESSION, 6}))
            throw std::runtime_error("cannot write overlay for " + id);
        ++drawn;
    }
    write_run_file(a.out, "visualize", args, {{"drawn", drawn}, {"skipped", total - drawn}});
    if (total > 0 && drawn == 0) throw DataError("none of the " + std::to_string(total) + " referenced images exist");
    std::cout << "drew " << drawn << " of " << total << " predictions into " << a.out << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"GarmNet garment and landmark detection"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);
    const std::vector<std::string> args(argv + 1, argv + argc);

    PrepareArgs pa;
    auto* prep = app.add_subcommand("prepare", "Parse a CTU-style annotation tree (or split a manifest) into train/val manifests");
    prep->add_option("--ctu", pa.ctu, "Dataset root with per-image annotation files");
    prep->add_option("--mapping", pa.mapping, "YAML file mapping source labels to the taxonomy");
    prep->add_option("--manifest", pa.manifest, "Existing manifest to split instead");
    prep->add_option("--out", pa.out, "Output directory")->required();
    prep->add_option("--val-count", pa.val_count, "Validation examples")->capture_default_str();
    prep->add_option("--seed", pa.seed, "Split seed")->capture_default_str();

    SynthArgs sa;
    auto* syn = app.add_subcommand("synth", "Generate synthetic scenes with exact annotations");
    syn->add_option("--config", sa.config, "YAML with synthetic scene settings");
    syn->add_option("--out", sa.out, "Output directory")->required();
    syn->add_option("--n", sa.n, "Number of scenes");
    syn->add_option("--size", sa.size, "Square image side in pixels");
    syn->add_option("--seed", sa.seed, "Generator seed");
    syn->add_option("--templates", sa.templates, "Comma-separated garment templates to cycle");

    TrainArgs ta;
    auto* tr = app.add_subcommand("train", "Train a model");
    tr->add_option("--config", ta.config, "YAML training config; flags override it");
    tr->add_option("--train", ta.train, "Training manifest")->required();
    tr->add_option("--val", ta.val, "Validation manifest");
    tr->add_option("--out", ta.out, "Run directory")->required();
    tr->add_option("--seed", ta.seed, "Sets the data, init and sampling seeds to seed, seed+1, seed+2");
    tr->add_option("--variant", ta.variant, "garmnet or garmnet-b");
    tr->add_option("--spatial-constraint", ta.spatial, "on or off");
    tr->add_option("--backbone", ta.backbone, "resnet50-conv4x or tiny");
    tr->add_option("--device", ta.device, "Compute device")->capture_default_str();
    tr->add_flag("--strict-determinism", ta.strict, "Serial data preparation");
    tr->add_option("--epochs", ta.epochs, "Epoch count");
    tr->add_option("--batch-size", ta.batch_size, "Examples per step");
    tr->add_option("--precision", ta.precision, "float or double")->capture_default_str();

    EvalArgs ea;
    auto* ev = app.add_subcommand("eval", "Score a checkpoint on a manifest");
    ev->add_option("--checkpoint", ea.checkpoint, "Checkpoint file")->required();
    ev->add_option("--manifest", ea.manifest, "Manifest to evaluate")->required();
    ev->add_option("--out", ea.out, "Directory for report.json");
    ev->add_option("--landmark-rule", ea.rule, "box_iou or radius");
    ev->add_option("--radius", ea.radius, "Match radius in network pixels");
    ev->add_option("--landmark-iou", ea.landmark_iou, "Landmark box IoU threshold");
    ev->add_option("--garment-iou", ea.garment_iou, "Garment box IoU threshold");
    ev->add_option("--precision", ea.precision, "float or double")->capture_default_str();

    PredictArgs pr;
    auto* pred = app.add_subcommand("predict", "Run a checkpoint on images");
    pred->add_option("--checkpoint", pr.checkpoint, "Checkpoint file")->required();
    pred->add_option("--manifest", pr.manifest, "Manifest whose images to run");
    pred->add_option("--image", pr.images, "Image file (repeatable)");
    pred->add_option("--out", pr.out, "Output directory")->required();
    pred->add_option("--precision", pr.precision, "float or double")->capture_default_str();

    VisualizeArgs va;
    auto* vis = app.add_subcommand("visualize", "Draw predictions over their images");
    vis->add_option("--predictions", va.predictions, "predictions.jsonl from predict")->required();
    vis->add_option("--manifest", va.manifest, "Manifest with ground truth and taxonomy");
    vis->add_option("--ground-truth", va.ground_truth, "on or off")->capture_default_str();
    vis->add_option("--out", va.out, "Output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        if (*prep) return run_prepare(pa, args);
        if (*syn) return run_synth(sa, args);
        if (*tr) return run_train(ta, args);
        if (*ev) {
            if (ea.precision == "double") return eval_with<double>(ea, args);
            if (ea.precision == "float") return eval_with<float>(ea, args);
            throw UsageError("precision must be float or double");
        }
        if (*pred) {
            if (pr.precision == "double") return predict_with<double>(pr, args);
            if (pr.precision == "float") return predict_with<float>(pr, args);
            throw UsageError("precision must be float or double");
        }
        if (*vis) return run_visualize(va, args);
    } catch (const NumericalError& e) {
        std::cerr << "garmnet: numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const DataError& e) {
        std::cerr << "garmnet: data error: " << e.what() << "\n";
        return 2;
    } catch (const CheckpointError& e) {
        std::cerr << "garmnet: checkpoint error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {  // ConfigError, UsageError, bad enum values
        std::cerr << "garmnet: " << e.what() << "\n";
        return 1;
    } catch (const YAML::Exception& e) {
        std::cerr << "garmnet: config error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "garmnet: error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
