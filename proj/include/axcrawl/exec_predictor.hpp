#ifndef AXCRAWL_EXEC_PREDICTOR_HPP
#define AXCRAWL_EXEC_PREDICTOR_HPP

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "axcrawl/eval.hpp"

namespace axcrawl {

/// Out-of-process predictor adapter. For every record the harness writes one
/// JSON object {image_path, a11y_path, task} to the command's standard input
/// and reads a single line of raw prediction from its standard output, so any
/// model runtime can be evaluated without linking against it.
inline Predictor command_predictor(std::string command, std::string images_dir) {
    return [command, images_dir](const TaskRecord& r) -> std::string {
        namespace fs = std::filesystem;
        ordered_json input;
        input["image_path"] = (fs::path(images_dir) / r.app_name / r.image_ref).string();
        input["a11y_path"] = tree_to_json(r.a11y_path);
        input["task"] = r.task;

        const fs::path dir = fs::temp_directory_path();
        const std::string tag = std::to_string(
            std::hash<std::string>{}(r.app_name + "/" + std::to_string(r.screen_id) + r.action));
        const fs::path in_path = dir / ("axcrawl_pred_in_" + tag + ".json");
        const fs::path out_path = dir / ("axcrawl_pred_out_" + tag + ".txt");
        {
            std::ofstream f(in_path);
            f << input.dump() << "\n";
        }
        const std::string full =
            command + " < " + in_path.string() + " > " + out_path.string();
        const int status = std::system(full.c_str());
        std::string line;
        {
            std::ifstream f(out_path);
            std::getline(f, line);
        }
        std::error_code ec;
        fs::remove(in_path, ec);
        fs::remove(out_path, ec);
        if (status != 0) throw PredictorFailure("predictor command exited with " + std::to_string(status));
        return line;
    };
}

}  // namespace axcrawl

#endif  // AXCRAWL_EXEC_PREDICTOR_HPP
