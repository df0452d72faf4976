/*
 * rff - Robust 3D point-set alignment and face frontalization.
 *
 * File: tools/rff_cli.cpp
 *
 * Copyright 2026 The rff Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#include "rff/deform_fit.hpp"
#include "rff/frontalize.hpp"
#include "rff/io.hpp"
#include "rff/robust_align.hpp"
#include "rff/shape_model.hpp"
#include "rff/synth.hpp"
#include "rff/zncc.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

std::string num(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

json to_json(const Eigen::MatrixXd& m)
{
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r)
    {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c)
        {
            row.push_back(m(r, c));
        }
        rows.push_back(row);
    }
    return rows;
}

json to_json(const Eigen::VectorXd& v)
{
    json out = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i)
    {
        out.push_back(v(i));
    }
    return out;
}

json to_json(const rff::SimilarityTransformd& t)
{
    const Eigen::Quaterniond q = rff::canonicalize(t.rotation);
    return {{"scale", t.scale},
            {"rotation", {{"w", q.w()}, {"x", q.x()}, {"y", q.y()}, {"z", q.z()}}},
            {"translation", {t.translation.x(), t.translation.y(), t.translation.z()}}};
}

json to_json(const rff::StudentState& s)
{
    return {{"mu", s.mu}, {"a", s.a}, {"sigma", to_json(Eigen::MatrixXd(s.sigma))}, {"weights", to_json(s.wbar)}};
}

void write_json(const fs::path& path, const json& j)
{
    rff::write_text(path, j.dump(2) + "\n");
}

void print_transform(const rff::SimilarityTransformd& t)
{
    const Eigen::Quaterniond q = rff::canonicalize(t.rotation);
    std::cout << "scale " << num(t.scale) << "\n"
              << "quaternion " << num(q.w()) << " " << num(q.x()) << " " << num(q.y()) << " " << num(q.z()) << "\n"
              << "translation " << num(t.translation.x()) << " " << num(t.translation.y()) << " "
              << num(t.translation.z()) << "\n";
}

std::vector<fs::path> sorted_matches(const fs::path& dir, const std::string& prefix, const std::string& ext)
{
    std::vector<fs::path> files;
    if (!fs::is_directory(dir))
    {
        throw rff::Error("'" + dir.string() + "' is not a directory");
    }
    for (const auto& entry : fs::directory_iterator(dir))
    {
        const std::string name = entry.path().filename().string();
        if (entry.is_regular_file() && name.rfind(prefix, 0) == 0 && entry.path().extension() == ext)
        {
            files.push_back(entry.path());
        }
    }
    std::sort(files.begin(), files.end());
    return files;
}

std::vector<rff::ShapeVector> load_shapes(const std::vector<fs::path>& files)
{
    std::vector<rff::ShapeVector> shapes;
    for (const fs::path& f : files)
    {
        shapes.push_back(rff::to_shape(rff::load_landmarks(f).points));
    }
    return shapes;
}

std::vector<long> read_integers(const fs::path& path)
{
    std::ifstream in(path);
    if (!in)
    {
        throw rff::Error("cannot open '" + path.string() + "'");
    }
    std::vector<long> values;
    std::string line;
    while (std::getline(in, line))
    {
        if (line.empty() || line[0] == '#')
        {
            continue;
        }
        std::istringstream fields(line);
        long v = 0;
        while (fields >> v)
        {
            values.push_back(v);
        }
        if (!fields.eof())
        {
            throw rff::FormatError("'" + path.string() + "' contains a non-integer field");
        }
    }
    return values;
}

void write_shape_family(const fs::path& dir, const rff::SynthFamily& family)
{
    fs::create_directories(dir);
    for (std::size_t m = 0; m < family.shapes.size(); ++m)
    {
        char name[32];
        std::snprintf(name, sizeof(name), "shape_%03zu.lm", m);
        rff::save_landmarks(dir / name, rff::to_points(family.shapes[m]));
    }
    std::string tris;
    for (const rff::Triangle& t : family.triangles)
    {
        tris += std::to_string(t[0]) + " " + std::to_string(t[1]) + " " + std::to_string(t[2]) + "\n";
    }
    rff::write_text(dir / "triangles.txt", tris);
    std::string idx;
    for (int i : family.landmark_indices)
    {
        idx += std::to_string(i) + "\n";
    }
    rff::write_text(dir / "landmarks.idx", idx);
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Robust 3D point-set alignment and face frontalization"};
    app.require_subcommand(1);

    // align
    auto* align_cmd = app.add_subcommand("align", "Robust similarity alignment of two landmark files");
    std::string a_source;
    std::string a_target;
    std::string a_out;
    rff::AlignConfig a_cfg;
    align_cmd->add_option("--source", a_source, "Landmarks to transform (.lm)")->required();
    align_cmd->add_option("--target", a_target, "Target landmarks (.lm)")->required();
    align_cmd->add_option("--eps", a_cfg.eps, "Convergence threshold")->capture_default_str();
    align_cmd->add_option("--max-iter", a_cfg.max_iterations, "Maximum EM iterations")->capture_default_str();
    align_cmd->add_option("--mu-init", a_cfg.mu_init, "Initial gamma shape")->capture_default_str();
    align_cmd->add_option("--out", a_out, "Output transform (.json)")->required();

    // build-model
    auto* build_cmd = app.add_subcommand("build-model", "Build a shape model from registered training shapes");
    std::string b_shapes;
    std::string b_expr;
    std::string b_out;
    double b_variance = 0.95;
    int b_min_modes = 1;
    build_cmd->add_option("--shapes", b_shapes, "Directory with shape_*.lm, triangles.txt, landmarks.idx")
        ->required();
    build_cmd->add_option("--variance", b_variance, "Retained variance fraction")->capture_default_str();
    build_cmd->add_option("--min-modes", b_min_modes, "Minimum number of modes")->capture_default_str();
    build_cmd->add_option("--expressions", b_expr, "Directory with paired neutral_*.lm and expressive_*.lm");
    build_cmd->add_option("--out", b_out, "Output model (.bin)")->required();

    // fit
    auto* fit_cmd = app.add_subcommand("fit", "Fit the deformable model to a landmark file");
    std::string f_landmarks;
    std::string f_model;
    std::string f_out;
    rff::FitConfig f_cfg;
    fit_cmd->add_option("--landmarks", f_landmarks, "Landmarks (.lm)")->required();
    fit_cmd->add_option("--model", f_model, "Model (.bin)")->required();
    fit_cmd->add_option("--eta", f_cfg.eta, "Ellipsoid penalty weight")->capture_default_str();
    fit_cmd->add_option("--eps", f_cfg.align.eps, "Convergence threshold")->capture_default_str();
    fit_cmd->add_option("--max-iter", f_cfg.align.max_iterations, "Maximum EM iterations")->capture_default_str();
    fit_cmd->add_option("--mu-init", f_cfg.align.mu_init, "Initial gamma shape")->capture_default_str();
    fit_cmd->add_option("--out", f_out, "Output fit (.json)")->required();

    // frontalize
    auto* front_cmd = app.add_subcommand("frontalize", "Frontalize a face image");
    std::string fr_image;
    std::string fr_landmarks;
    std::string fr_model;
    std::string fr_out;
    std::string fr_pose;
    rff::PipelineConfig fr_cfg;
    front_cmd->add_option("--image", fr_image, "Input image (.pgm/.ppm)")->required();
    front_cmd->add_option("--landmarks", fr_landmarks, "3D landmarks of the input (.lm)")->required();
    front_cmd->add_option("--model", fr_model, "Model (.bin)")->required();
    front_cmd->add_option("--out", fr_out, "Output image")->required();
    front_cmd->add_option("--pose-out", fr_pose, "Pose JSON (default: <out>.pose.json)");
    front_cmd->add_option("--eta", fr_cfg.fit.eta, "Ellipsoid penalty weight")->capture_default_str();
    front_cmd->add_option("--supersample", fr_cfg.supersample, "Depth samples per pixel and axis")
        ->capture_default_str();
    front_cmd->add_flag("--soft-symmetry", fr_cfg.soft_symmetry, "Fill occluded pixels from their mirror");
    front_cmd->add_flag("--bilinear", fr_cfg.warp.bilinear, "Bilinear sampling of the input");

    // zncc
    auto* zncc_cmd = app.add_subcommand("zncc", "Mouth-region ZNCC between a frontalized image and a reference");
    std::string z_pred;
    std::string z_truth;
    std::string z_pred_lm;
    std::string z_truth_lm;
    int z_max_shift = rff::kDefaultMaxShift;
    int z_margin = rff::kDefaultMouthMargin;
    zncc_cmd->add_option("--pred", z_pred, "Frontalized image")->required();
    zncc_cmd->add_option("--truth", z_truth, "Reference image")->required();
    zncc_cmd->add_option("--pred-landmarks", z_pred_lm, "Landmarks of the frontalized image")->required();
    zncc_cmd->add_option("--truth-landmarks", z_truth_lm, "Landmarks of the reference image")->required();
    zncc_cmd->add_option("--max-shift", z_max_shift, "Shift search radius")->capture_default_str();
    zncc_cmd->add_option("--margin", z_margin, "Mouth box margin")->capture_default_str();

    // synth
    auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic scene");
    rff::SynthConfig s_cfg;
    std::string s_out;
    synth_cmd->add_option("--seed", s_cfg.seed, "Random seed")->capture_default_str();
    synth_cmd->add_option("--yaw", s_cfg.yaw_degrees, "Head yaw in degrees")->capture_default_str();
    synth_cmd->add_option("--noise", s_cfg.noise_sigma, "Landmark noise standard deviation")->capture_default_str();
    synth_cmd->add_option("--outliers", s_cfg.outlier_fraction, "Outlier fraction")->capture_default_str();
    synth_cmd->add_option("--vertices", s_cfg.vertices, "Approximate mesh vertex count")->capture_default_str();
    synth_cmd->add_option("--shapes", s_cfg.shapes, "Training shapes")->capture_default_str();
    synth_cmd->add_option("--modes", s_cfg.modes, "Deformation modes")->capture_default_str();
    synth_cmd->add_option("--out", s_out, "Output directory")->required();

    try
    {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e)
    {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e)
    {
        return app.exit(e);
    } catch (const CLI::ParseError& e)
    {
        app.exit(e);
        return kExitUsage;
    }

    try
    {
        if (*align_cmd)
        {
            const rff::PointSet3d X = rff::load_landmarks(a_source).points;
            const rff::PointSet3d Z = rff::load_landmarks(a_target).points;
            const rff::AlignResult r = rff::align(X, Z, a_cfg);
            json j = to_json(r.transform);
            j["student"] = to_json(r.student);
            j["iterations"] = r.iterations;
            j["converged"] = r.converged;
            write_json(a_out, j);
            print_transform(r.transform);
            std::cout << "mu " << num(r.student.mu) << "\n"
                      << "iterations " << r.iterations << "\n";
        } else if (*build_cmd)
        {
            const fs::path dir(b_shapes);
            const auto files = sorted_matches(dir, "shape_", ".lm");
            if (files.size() < 2)
            {
                throw rff::InvalidInput("at least 2 shape_*.lm files are required in '" + dir.string() + "'");
            }
            rff::ShapeModel model = rff::build_model(load_shapes(files), b_variance, b_min_modes);
            if (fs::exists(dir / "triangles.txt"))
            {
                const auto v = read_integers(dir / "triangles.txt");
                if (v.size() % 3 != 0)
                {
                    throw rff::FormatError("triangles.txt must hold three indices per triangle");
                }
                for (std::size_t i = 0; i < v.size(); i += 3)
                {
                    model.triangles.push_back(
                        {static_cast<int>(v[i]), static_cast<int>(v[i + 1]), static_cast<int>(v[i + 2])});
                }
            }
            if (fs::exists(dir / "landmarks.idx"))
            {
                for (long i : read_integers(dir / "landmarks.idx"))
                {
                    model.landmark_indices.push_back(static_cast<int>(i));
                }
            }
            if (!b_expr.empty())
            {
                const auto neutral = sorted_matches(b_expr, "neutral_", ".lm");
                const auto expressive = sorted_matches(b_expr, "expressive_", ".lm");
                model.expression = rff::build_expression_part(load_shapes(neutral), load_shapes(expressive),
                                                              b_variance, b_min_modes);
            }
            rff::save_model(b_out, model);
            std::cout << "vertices " << model.num_vertices() << "\n"
                      << "modes " << model.num_modes() << "\n"
                      << "landmarks " << model.landmark_indices.size() << "\n";
        } else if (*fit_cmd)
        {
            const rff::PointSet3d Y = rff::load_landmarks(f_landmarks).points;
            const rff::ShapeModel model = rff::load_model(f_model);
            const rff::FitResult r = rff::fit(Y, model, f_cfg);
            for (const std::string& w : r.warnings)
            {
                std::cerr << "warning: " << w << "\n";
            }
            json j = to_json(r.transform);
            j["embedding"] = to_json(r.embedding);
            j["student"] = to_json(r.student);
            j["iterations"] = r.iterations;
            j["converged"] = r.converged;
            j["ellipsoid"] = rff::ellipsoid_check(model, r.embedding.head(model.num_modes()));
            write_json(f_out, j);
            print_transform(r.transform);
            std::cout << "mu " << num(r.student.mu) << "\n"
                      << "iterations " << r.iterations << "\n";
        } else if (*front_cmd)
        {
            const rff::Image input = rff::load_image(fr_image);
            const rff::PointSet3d X = rff::load_landmarks(fr_landmarks).points;
            const rff::ShapeModel model = rff::load_model(fr_model);
            const rff::PipelineResult r = rff::run_pipeline(input, X, model, fr_cfg);
            rff::save_image(fr_out, r.frontal);
            fs::path pose_path = fr_pose;
            if (pose_path.empty())
            {
                pose_path = fs::path(fr_out).replace_extension(".pose.json");
            }
            json j;
            j["pose"] = to_json(r.pose);
            j["head_pose"] = to_json(r.head_pose);
            j["yaw_degrees"] = r.yaw_degrees;
            j["canvas_offset"] = {r.canvas_offset.x(), r.canvas_offset.y(), r.canvas_offset.z()};
            j["fit"] = to_json(r.fit.transform);
            j["fit"]["embedding"] = to_json(r.fit.embedding);
            j["frontal_landmarks"] = to_json(Eigen::MatrixXd(r.frontal_landmarks.transpose()));
            write_json(pose_path, j);
            const fs::path lm_path = fs::path(fr_out).replace_extension(".lm");
            rff::save_landmarks(lm_path, r.frontal_landmarks);
            for (const std::string& w : r.fit.warnings)
            {
                std::cerr << "warning: " << w << "\n";
            }
            std::cout << "yaw " << num(r.yaw_degrees) << "\n";
        } else if (*zncc_cmd)
        {
            const rff::Image pred = rff::load_image(z_pred);
            const rff::Image truth = rff::load_image(z_truth);
            const rff::PointSet3d lm_pred = rff::load_landmarks(z_pred_lm).points;
            const rff::PointSet3d lm_truth = rff::load_landmarks(z_truth_lm).points;
            const rff::Image scaled = rff::scale_normalize(pred, lm_pred, lm_truth);
            const rff::Region region = rff::mouth_region(lm_truth, z_margin, truth.width, truth.height);
            const rff::ZnccResult r = rff::zncc_search(scaled, truth, region, z_max_shift);
            std::cout << "zncc " << num(r.coefficient) << "\n"
                      << "shift " << r.shift_x << " " << r.shift_y << "\n";
        } else if (*synth_cmd)
        {
            const fs::path dir(s_out);
            const rff::SynthScene scene = rff::synth_scene(s_cfg);
            fs::create_directories(dir);
            rff::save_image(dir / "input.pgm", scene.image);
            rff::save_image(dir / "frontal.pgm", scene.frontal);
            rff::save_landmarks(dir / "landmarks.lm", scene.landmarks);
            rff::save_landmarks(dir / "frontal_landmarks.lm", scene.frontal_landmarks);
            rff::save_model(dir / "model.bin", scene.model);
            write_shape_family(dir / "shapes", rff::synth_family(s_cfg.seed, s_cfg.vertices, s_cfg.shapes,
                                                                  s_cfg.modes));
            json truth = to_json(scene.pose);
            truth["yaw_degrees"] = s_cfg.yaw_degrees;
            truth["embedding"] = to_json(scene.embedding);
            json outliers = json::array();
            for (std::size_t j = 0; j < scene.outliers.size(); ++j)
            {
                if (scene.outliers[j])
                {
                    outliers.push_back(j);
                }
            }
            truth["outliers"] = outliers;
            write_json(dir / "truth.json", truth);
            std::cout << "vertices " << scene.model.num_vertices() << "\n"
                      << "modes " << scene.model.num_modes() << "\n"
                      << "outliers " << outliers.size() << "\n";
        }
    } catch (const std::exception& e)
    {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return 0;
}
