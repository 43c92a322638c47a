// SPDX-License-Identifier: Apache-2.0

// swiftface detect|bench|eval|shapes|init-weights
//
// Exit codes: 0 success, 1 usage error, 2 data error.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "swiftface/swiftface.hpp"

namespace fs = std::filesystem;
using namespace swiftface;

namespace {

constexpr int kUsageError = 1;
constexpr int kDataError = 2;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct RunConfig {
    std::string model = "builtin";
    std::string weights;
    std::optional<std::uint64_t> seed;
    std::string input;
    double conf = kDefaultConfThreshold;
    double nms = kDefaultNmsThreshold;
    int threads = 1;
    bool draw = false;
    bool letterbox = false;
    std::string out;
    bool json = false;
    std::vector<std::string> positional;
};

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw std::runtime_error("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
    if (!out)
        throw std::runtime_error("cannot write " + path.string());
}

void emit(const RunConfig& cfg, const std::string& text) {
    if (cfg.out.empty())
        std::cout << text;
    else
        write_text(cfg.out, text);
}

NetworkSpec load_spec(const std::string& model) {
    if (model == "builtin")
        return builtin_swiftface();
    return parse_config(read_text(model));
}

ModelParams load_params(const RunConfig& cfg, const NetworkSpec& spec) {
    if (!cfg.weights.empty()) {
        const auto text = read_text(cfg.weights);
        const auto* p = reinterpret_cast<const std::byte*>(text.data());
        return load_weights(std::span<const std::byte>(p, text.size()), spec);
    }
    if (cfg.seed)
        return random_init(spec, *cfg.seed);
    throw UsageError("no weights: pass --weights <path> or --seed <n>");
}

void check_thresholds(const RunConfig& cfg) {
    if (!(cfg.conf > 0 && cfg.conf < 1) || !(cfg.nms > 0 && cfg.nms < 1))
        throw UsageError("--conf and --nms must lie in (0, 1)");
    if (cfg.threads < 1)
        throw UsageError("--threads must be at least 1");
}

DetectRun run_pipeline(const RunConfig& cfg, bool keep_images) {
    check_thresholds(cfg);
    if (cfg.input.empty())
        throw UsageError("--input is required");
    auto spec = load_spec(cfg.model);
    validate_swiftface(spec);
    const auto params = load_params(cfg, spec);
    const Model model(std::move(spec), params);

    const auto paths = list_inputs(cfg.input);
    if (paths.empty())
        throw std::runtime_error("no input images found in " + cfg.input);

    DetectOptions opts;
    opts.conf_threshold = cfg.conf;
    opts.nms_threshold = cfg.nms;
    opts.threads = cfg.threads;
    opts.resize = cfg.letterbox ? ResizeMode::letterbox : ResizeMode::stretch;
    opts.keep_images = keep_images;
    auto run = run_detection(model, paths, opts);
    for (const auto& r : run.results)
        if (!r.ok)
            std::cerr << "warning: skipped " << r.path.string() << ": " << r.error << "\n";
    return run;
}

int cmd_detect(const RunConfig& cfg) {
    const auto run = run_pipeline(cfg, cfg.draw);
    std::vector<ImageDetections> images;
    std::size_t skipped = 0;
    for (const auto& r : run.results) {
        if (!r.ok) {
            ++skipped;
            continue;
        }
        images.push_back({r.path.string(), r.detections});
    }
    if (images.empty())
        throw std::runtime_error("no image could be processed");
    emit(cfg, detections_to_json(images).dump(2) + "\n");

    if (cfg.draw) {
        const fs::path dir = cfg.out.empty() ? fs::path(".") : fs::path(cfg.out).parent_path();
        for (const auto& r : run.results) {
            if (!r.ok)
                continue;
            RgbImage canvas = r.image;
            for (const auto& d : r.detections)
                draw_box(canvas, round4(d.bbox.left()), round4(d.bbox.top()), round4(d.bbox.w), round4(d.bbox.h));
            write_ppm((dir.empty() ? fs::path(".") : dir) / (r.path.stem().string() + ".det.ppm"), canvas);
        }
    }
    if (skipped)
        std::cerr << skipped << " of " << run.results.size() << " images skipped\n";
    return 0;
}

int cmd_bench(const RunConfig& cfg) {
    const auto run = run_pipeline(cfg, false);
    StageTimes stages;
    std::size_t ok = 0;
    for (const auto& r : run.results) {
        if (!r.ok)
            continue;
        ++ok;
        stages.preprocess_s += r.times.preprocess_s;
        stages.forward_s += r.times.forward_s;
        stages.postprocess_s += r.times.postprocess_s;
    }
    if (ok == 0)
        throw std::runtime_error("no image could be processed");
    const auto report = make_bench_report(ok, run.wall_time_s, stages);

    if (cfg.json) {
        emit(cfg, bench_report_to_json(report).dump(2) + "\n");
        return 0;
    }
    std::ostringstream text;
    text << "images       " << report.n_images << "\n"
         << "time (s)     " << report.total_time_s << "\n"
         << "fps          " << format_fps(report.fps) << "\n"
         << "preprocess   " << stages.preprocess_s << " s\n"
         << "forward      " << stages.forward_s << " s\n"
         << "postprocess  " << stages.postprocess_s << " s\n";
    emit(cfg, text.str());
    return 0;
}

int cmd_eval(const RunConfig& cfg) {
    if (cfg.positional.size() != 2)
        throw UsageError("eval needs <detections.json> <annotations.txt>");
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(read_text(cfg.positional[0]));
    } catch (const nlohmann::json::parse_error& e) {
        throw std::runtime_error(cfg.positional[0] + ": " + e.what());
    }
    const auto dets = group_by_image(detections_from_json(doc));
    const auto gts = parse_widerface(read_text(cfg.positional[1]));
    const auto report = map_5095(dets, gts);

    const auto j = eval_report_to_json(report);
    if (cfg.json) {
        emit(cfg, j.dump(2) + "\n");
        return 0;
    }
    std::ostringstream text;
    text.setf(std::ios::fixed);
    text.precision(4);
    for (std::size_t t = 0; t < kIouThresholdsPercent.size(); ++t)
        text << "ap" << kIouThresholdsPercent[t] << "  " << report.ap_per_iou[t] << "\n";
    text << "map_5095  " << report.map_5095 << "\n";
    std::cout << text.str();
    if (!cfg.out.empty())
        write_text(cfg.out, j.dump(2) + "\n");
    return 0;
}

int cmd_shapes(const RunConfig& cfg) {
    const auto spec = load_spec(cfg.model);
    if (cfg.json) {
        nlohmann::ordered_json rows = nlohmann::ordered_json::array();
        const auto shapes = infer_layer_shapes(spec);
        for (std::size_t i = 0; i < spec.layers.size(); ++i)
            rows.push_back({{"layer", i},
                            {"kind", kind_name(spec.layers[i].kind)},
                            {"input", shapes[i].input.str()},
                            {"output", shapes[i].output.str()}});
        emit(cfg, rows.dump(2) + "\n");
        return 0;
    }
    emit(cfg, shape_table(spec));
    return 0;
}

int cmd_init_weights(const RunConfig& cfg) {
    if (!cfg.seed)
        throw UsageError("init-weights needs --seed");
    if (cfg.out.empty())
        throw UsageError("init-weights needs --out");
    const auto spec = load_spec(cfg.model);
    const auto bytes = save_weights(random_init(spec, *cfg.seed));
    std::ofstream out(cfg.out, std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out)
        throw std::runtime_error("cannot write " + cfg.out);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"SwiftFace face detector: inference, benchmarking and evaluation"};
    app.require_subcommand(1);
    RunConfig cfg;

    auto add_model = [&](CLI::App* sub) {
        sub->add_option("--model", cfg.model, "model config path or 'builtin'")->capture_default_str();
    };
    auto add_run = [&](CLI::App* sub) {
        add_model(sub);
        sub->add_option("--weights", cfg.weights, "weights file");
        sub->add_option("--seed", cfg.seed, "random-initialize weights with this seed instead of --weights");
        sub->add_option("--input", cfg.input, "image directory, list file, or single PPM/PGM image");
        sub->add_option("--conf", cfg.conf, "confidence threshold (keeps conf > threshold)")->capture_default_str();
        sub->add_option("--nms", cfg.nms, "NMS IoU threshold")->capture_default_str();
        sub->add_option("--threads", cfg.threads, "worker threads")->capture_default_str();
        sub->add_flag("--letterbox", cfg.letterbox, "preserve aspect ratio when resizing");
        sub->add_option("--out", cfg.out, "output path (default stdout)");
    };

    auto* detect = app.add_subcommand("detect", "detect faces and write detection JSON");
    add_run(detect);
    detect->add_flag("--draw", cfg.draw, "write <stem>.det.ppm copies with boxes next to --out");

    auto* bench = app.add_subcommand("bench", "time the full pipeline over an image set");
    add_run(bench);
    bench->add_flag("--json", cfg.json, "print the report as JSON");

    auto* eval = app.add_subcommand("eval", "mAP(.5:.95) of detections against WIDER FACE annotations");
    eval->add_option("files", cfg.positional, "<detections.json> <annotations.txt>")->expected(2);
    eval->add_option("--out", cfg.out, "also write the JSON report here");
    eval->add_flag("--json", cfg.json, "print the report as JSON");

    auto* shapes = app.add_subcommand("shapes", "print the per-layer shape table");
    add_model(shapes);
    shapes->add_option("--out", cfg.out, "output path (default stdout)");
    shapes->add_flag("--json", cfg.json, "print as JSON");

    auto* init = app.add_subcommand("init-weights", "write seeded random weights");
    add_model(init);
    init->add_option("--seed", cfg.seed, "RNG seed")->required();
    init->add_option("--out", cfg.out, "weights output path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kUsageError;
    }

    try {
        if (*detect)
            return cmd_detect(cfg);
        if (*bench)
            return cmd_bench(cfg);
        if (*eval)
            return cmd_eval(cfg);
        if (*shapes)
            return cmd_shapes(cfg);
        return cmd_init_weights(cfg);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsageError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kDataError;
    }
}
