#include "mtr/dataset_io.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "mtr/checkpoint.hpp"
#include "mtr/hashing.hpp"
#include "mtr/network.hpp"
#include "mtr/vocabulary.hpp"

namespace mtr {

using nlohmann::json;

namespace {

template <std::size_t N>
std::size_t index_of(const std::array<std::string_view, N>& names, const std::string& name, const char* what) {
    const auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) throw ConfigError(std::string("unknown ") + what + " '" + name + "'");
    return static_cast<std::size_t>(it - names.begin());
}

template <typename T>
T get_as(const json& v, const std::string& key) {
    try {
        return v.get<T>();
    } catch (const json::exception&) {
        throw ConfigError("config key '" + key + "' has the wrong type");
    }
}

std::size_t get_count(const json& v, const std::string& key) {
    if (!v.is_number_integer() || v.get<long long>() < 0) {
        throw ConfigError("config key '" + key + "' must be a non-negative integer");
    }
    return v.get<std::size_t>();
}

json box_json(const Box& b) { return json::array({b.x_min(), b.y_min(), b.x_max(), b.y_max()}); }

Box box_from(const json& j) {
    if (!j.is_array() || j.size() != 4) throw std::runtime_error("dataset: box must have four coordinates");
    return Box(j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>());
}

}  // namespace

void GenerateConfig::validate() const {
    scene.validate();
    if (n_train < 1 || n_val < 2) throw ConfigError("config: need n_train >= 1 and n_val >= 2");
}

GenerateConfig parse_generate_config(std::string_view json_text) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!doc.is_object()) throw ConfigError("config must be a JSON object");

    GenerateConfig cfg;
    SceneSpec& s = cfg.scene;
    for (const auto& [key, v] : doc.items()) {
        if (key == "n_train") {
            cfg.n_train = get_count(v, key);
        } else if (key == "n_val") {
            cfg.n_val = get_count(v, key);
        } else if (key == "canvas_width") {
            s.canvas_width = get_count(v, key);
        } else if (key == "canvas_height") {
            s.canvas_height = get_count(v, key);
        } else if (key == "min_persons") {
            s.min_persons = get_count(v, key);
        } else if (key == "max_persons") {
            s.max_persons = get_count(v, key);
        } else if (key == "min_person_height") {
            s.min_person_height = get_as<double>(v, key);
        } else if (key == "max_person_height") {
            s.max_person_height = get_as<double>(v, key);
        } else if (key == "action_prior") {
            if (v.is_array()) {
                if (v.size() != kNumActions) throw ConfigError("action_prior must list 10 weights");
                for (std::size_t a = 0; a < kNumActions; ++a) s.action_prior[a] = get_as<double>(v[a], key);
            } else if (v.is_object()) {
                s.action_prior.fill(0.0);
                for (const auto& [name, p] : v.items()) {
                    s.action_prior[index_of(kActionNames, name, "action")] = get_as<double>(p, key);
                }
            } else {
                throw ConfigError("action_prior must be an array or an object");
            }
        } else if (key == "cooccurrence") {
            if (!v.is_object()) throw ConfigError("cooccurrence must map actions to {object: probability}");
            for (auto& row : s.cooccurrence) row.fill(0.0);
            for (const auto& [action, row] : v.items()) {
                const std::size_t a = index_of(kActionNames, action, "action");
                if (!row.is_object()) throw ConfigError("cooccurrence rows must be objects");
                for (const auto& [object, p] : row.items()) {
                    s.cooccurrence[a][index_of(kContextObjectNames, object, "context object")] = get_as<double>(p, key);
                }
            }
        } else if (key == "pose_by_action") {
            s.pose_by_action = get_as<bool>(v, key);
        } else if (key == "pose_variation") {
            s.pose_variation = get_as<double>(v, key);
        } else if (key == "occlusion_rate") {
            s.occlusion_rate = get_as<double>(v, key);
        } else if (key == "noise") {
            s.noise = get_as<double>(v, key);
        } else if (key == "distractor_rate") {
            s.distractor_rate = get_as<double>(v, key);
        } else if (key == "clutter_strokes") {
            s.clutter_strokes = get_count(v, key);
        } else if (key == "proposals_per_instance") {
            s.proposals_per_instance = get_count(v, key);
        } else if (key == "background_proposals") {
            s.background_proposals = get_count(v, key);
        } else if (key == "seed") {
            s.seed = get_as<std::uint64_t>(v, key);
        } else {
            throw ConfigError("unknown config key '" + key + "'");
        }
    }
    try {
        cfg.validate();
    } catch (const ConfigError&) {
        throw;
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    return cfg;
}

std::string generate_config_json(const GenerateConfig& cfg) {
    const SceneSpec& s = cfg.scene;
    json prior = json::object();
    json co = json::object();
    for (std::size_t a = 0; a < kNumActions; ++a) {
        prior[std::string(kActionNames[a])] = s.action_prior[a];
        json row = json::object();
        for (std::size_t o = 0; o < kNumContextObjects; ++o) row[std::string(kContextObjectNames[o])] = s.cooccurrence[a][o];
        co[std::string(kActionNames[a])] = row;
    }
    json j = {
        {"n_train", cfg.n_train},
        {"n_val", cfg.n_val},
        {"canvas_width", s.canvas_width},
        {"canvas_height", s.canvas_height},
        {"min_persons", s.min_persons},
        {"max_persons", s.max_persons},
        {"min_person_height", s.min_person_height},
        {"max_person_height", s.max_person_height},
        {"action_prior", prior},
        {"cooccurrence", co},
        {"pose_by_action", s.pose_by_action},
        {"pose_variation", s.pose_variation},
        {"occlusion_rate", s.occlusion_rate},
        {"noise", s.noise},
        {"distractor_rate", s.distractor_rate},
        {"clutter_strokes", s.clutter_strokes},
        {"proposals_per_instance", s.proposals_per_instance},
        {"background_proposals", s.background_proposals},
        {"seed", s.seed},
    };
    return j.dump();
}

Dataset generate_synthetic(const GenerateConfig& cfg, std::size_t threads) {
    cfg.validate();
    Dataset d;
    d.config = cfg;
    d.config_hash = sha256_hex(generate_config_json(cfg));
    d.train = generate_dataset(cfg.scene, cfg.n_train, 0, threads);
    d.val = generate_dataset(cfg.scene, cfg.n_val, kValSeedOffset, threads);
    return d;
}

std::string encode_scene_record(const Scene& scene, std::size_t index, std::size_t offset) {
    json instances = json::array();
    for (const auto& inst : scene.instances) {
        json ji = {{"box", box_json(inst.box)}};
        if (inst.keypoints) {
            json kps = json::array();
            for (const auto& k : *inst.keypoints) kps.push_back({k.x, k.y, k.visible ? 1 : 0});
            ji["keypoints"] = kps;
        }
        if (inst.action) ji["action"] = std::string(kActionNames.at(*inst.action));
        instances.push_back(ji);
    }
    json objects = json::array();
    for (const auto& o : scene.objects) {
        objects.push_back({{"box", box_json(o.box)}, {"class", std::string(kContextObjectNames.at(o.object_class))}});
    }
    json proposals = json::array();
    for (const auto& p : scene.proposals) proposals.push_back(box_json(p));
    json j = {
        {"index", index},
        {"seed", scene.seed},
        {"canvas",
         {{"width", scene.canvas.width},
          {"height", scene.canvas.height},
          {"channels", kCanvasChannels},
          {"offset", offset},
          {"bytes", scene.canvas.pixels.size()}}},
        {"instances", instances},
        {"objects", objects},
        {"proposals", proposals},
    };
    return j.dump();
}

Scene decode_scene_record(std::string_view line, std::string_view sidecar) {
    const json j = json::parse(line);
    Scene s;
    s.seed = j.at("seed").get<std::uint64_t>();
    const auto& c = j.at("canvas");
    s.canvas.width = c.at("width").get<std::size_t>();
    s.canvas.height = c.at("height").get<std::size_t>();
    const auto offset = c.at("offset").get<std::size_t>();
    const auto bytes = c.at("bytes").get<std::size_t>();
    if (c.at("channels").get<std::size_t>() != kCanvasChannels ||
        bytes != kCanvasChannels * s.canvas.width * s.canvas.height) {
        throw std::runtime_error("dataset: canvas header is inconsistent");
    }
    if (offset > sidecar.size() || bytes > sidecar.size() - offset) {
        throw std::runtime_error("dataset: canvas lies outside the tensor file");
    }
    const auto* base = reinterpret_cast<const std::uint8_t*>(sidecar.data()) + offset;
    s.canvas.pixels.assign(base, base + bytes);
    for (const auto& ji : j.at("instances")) {
        Instance inst{box_from(ji.at("box")), std::nullopt, std::nullopt};
        if (ji.contains("keypoints")) {
            std::vector<Keypoint> kps;
            for (const auto& k : ji["keypoints"]) kps.push_back({k.at(0).get<double>(), k.at(1).get<double>(), k.at(2).get<int>() != 0});
            inst.keypoints = std::move(kps);
        }
        if (ji.contains("action")) inst.action = index_of(kActionNames, ji["action"].get<std::string>(), "action");
        validate_instance(inst, kNumActions);
        s.instances.push_back(std::move(inst));
    }
    for (const auto& jo : j.at("objects")) {
        s.objects.push_back(
            {box_from(jo.at("box")), index_of(kContextObjectNames, jo.at("class").get<std::string>(), "context object")});
    }
    for (const auto& jp : j.at("proposals")) s.proposals.push_back(box_from(jp));
    return s;
}

namespace {

void write_split(const std::filesystem::path& dir, const std::string& name, const std::vector<Scene>& scenes) {
    std::string records;
    std::string sidecar;
    for (std::size_t i = 0; i < scenes.size(); ++i) {
        records += encode_scene_record(scenes[i], i, sidecar.size());
        records += '\n';
        sidecar.append(reinterpret_cast<const char*>(scenes[i].canvas.pixels.data()), scenes[i].canvas.pixels.size());
    }
    write_file_atomic(dir / (name + ".jsonl"), records);
    write_file_atomic(dir / (name + ".bin"), sidecar);
}

std::vector<Scene> read_split(const std::filesystem::path& dir, const std::string& name) {
    const std::string records = read_file(dir / (name + ".jsonl"));
    const std::string sidecar = read_file(dir / (name + ".bin"));
    std::vector<Scene> scenes;
    std::istringstream in(records);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        try {
            scenes.push_back(decode_scene_record(line, sidecar));
        } catch (const json::exception& e) {
            throw std::runtime_error(name + ".jsonl line " + std::to_string(scenes.size() + 1) + ": " + e.what());
        }
    }
    return scenes;
}

constexpr std::array<std::string_view, 4> kDatasetFiles = {"train.jsonl", "train.bin", "val.jsonl", "val.bin"};

}  // namespace

std::string write_dataset(const std::filesystem::path& dir, Dataset& dataset) {
    namespace fs = std::filesystem;
    const fs::path target = fs::absolute(dir).lexically_normal();
    const fs::path staging = target.parent_path() / (target.filename().string() + ".partial");
    fs::create_directories(target.parent_path());
    fs::remove_all(staging);
    fs::create_directories(staging);
    try {
        write_split(staging, "train", dataset.train);
        write_split(staging, "val", dataset.val);
        json files = json::object();
        std::string joined;
        for (auto f : kDatasetFiles) {
            const std::string h = sha256_file(staging / std::string(f));
            files[std::string(f)] = h;
            joined += h;
        }
        dataset.dataset_hash = sha256_hex(joined);
        json manifest = {
            {"format", "mtr-dataset"},
            {"version", kDatasetVersion},
            {"seed", dataset.config.scene.seed},
            {"config", json::parse(generate_config_json(dataset.config))},
            {"config_hash", dataset.config_hash},
            {"files", files},
            {"dataset_hash", dataset.dataset_hash},
            {"n_train", dataset.train.size()},
            {"n_val", dataset.val.size()},
        };
        write_file_atomic(staging / "manifest.json", manifest.dump(2) + "\n");
        if (fs::exists(target)) fs::remove_all(target);
        fs::rename(staging, target);
    } catch (...) {
        std::error_code ec;
        fs::remove_all(staging, ec);
        throw;
    }
    return dataset.dataset_hash;
}

Dataset read_dataset(const std::filesystem::path& dir) {
    json manifest;
    try {
        manifest = json::parse(read_file(dir / "manifest.json"));
    } catch (const json::exception& e) {
        throw std::runtime_error("dataset manifest is unreadable: " + std::string(e.what()));
    }
    if (manifest.value("format", "") != "mtr-dataset" || manifest.value("version", 0) != kDatasetVersion) {
        throw std::runtime_error("dataset manifest has an unsupported format or version");
    }
    std::string joined;
    for (auto f : kDatasetFiles) {
        const std::string expected = manifest.at("files").at(std::string(f)).get<std::string>();
        const std::string actual = sha256_file(dir / std::string(f));
        if (expected != actual) throw std::runtime_error("dataset file " + std::string(f) + " does not match its hash");
        joined += actual;
    }
    Dataset d;
    d.config = parse_generate_config(manifest.at("config").dump());
    d.config_hash = manifest.at("config_hash").get<std::string>();
    d.dataset_hash = sha256_hex(joined);
    if (d.dataset_hash != manifest.at("dataset_hash").get<std::string>()) {
        throw std::runtime_error("dataset hash does not match the manifest");
    }
    d.train = read_split(dir, "train");
    d.val = read_split(dir, "val");
    return d;
}

void export_ppm(const Canvas& canvas, const std::filesystem::path& path) {
    std::string out = "P6\n" + std::to_string(canvas.width) + " " + std::to_string(canvas.height) + "\n255\n";
    for (std::size_t y = 0; y < canvas.height; ++y) {
        for (std::size_t x = 0; x < canvas.width; ++x) {
            const double gray = 0.6 * canvas.at(3, y, x);
            for (std::size_t c = 0; c < 3; ++c) {
                const double v = std::max(canvas.at(c, y, x), gray);
                out.push_back(static_cast<char>(static_cast<std::uint8_t>(std::lround(v * 255.0))));
            }
        }
    }
    write_file_atomic(path, out);
}

}  // namespace mtr
