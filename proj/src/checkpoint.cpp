#include "normalnorm/checkpoint.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "normalnorm/errors.hpp"

namespace normalnorm {

namespace {

using nlohmann::json;

bool is_little_endian() {
    const std::uint32_t probe = 1;
    unsigned char b;
    std::memcpy(&b, &probe, 1);
    return b == 1;
}

void append_f32(std::vector<char>& blob, const std::vector<double>& values) {
    for (double v : values) {
        float f = static_cast<float>(v);
        char bytes[4];
        std::memcpy(bytes, &f, 4);
        if (!is_little_endian()) std::swap(bytes[0], bytes[3]), std::swap(bytes[1], bytes[2]);
        blob.insert(blob.end(), bytes, bytes + 4);
    }
}

std::vector<double> read_f32(const std::vector<char>& blob, std::size_t offset,
                             std::size_t count) {
    if (offset + 4 * count > blob.size()) {
        throw DomainError("checkpoint blob is shorter than the manifest claims");
    }
    std::vector<double> out(count);
    for (std::size_t i = 0; i < count; ++i) {
        char bytes[4];
        std::memcpy(bytes, blob.data() + offset + 4 * i, 4);
        if (!is_little_endian()) std::swap(bytes[0], bytes[3]), std::swap(bytes[1], bytes[2]);
        float f;
        std::memcpy(&f, bytes, 4);
        out[i] = static_cast<double>(f);
    }
    return out;
}

json grouping_to_json(const GroupingSpec& g) {
    return json{{"mode", to_string(g.mode)}, {"group_size", g.group_size}};
}

GroupingSpec grouping_from_json(const json& j) {
    GroupingSpec g;
    g.mode = grouping_mode_from_string(j.at("mode").get<std::string>());
    g.group_size = j.at("group_size").get<std::int64_t>();
    return g;
}

} // namespace

void save_checkpoint(const Mlp& model, const std::string& dir) {
    std::filesystem::create_directories(dir);

    json manifest;
    manifest["format"] = "normalnorm-checkpoint-v1";
    json spec;
    spec["widths"] = model.spec.widths;
    std::vector<std::string> kinds;
    for (auto k : model.spec.norm_kinds) kinds.push_back(to_string(k));
    spec["norm_kinds"] = kinds;
    spec["grouping"] = grouping_to_json(model.spec.grouping);
    spec["eps"] = model.spec.eps;
    spec["xi"] = model.spec.xi;
    spec["alpha"] = model.spec.alpha;
    spec["noise_mode"] = to_string(model.spec.noise_mode);
    spec["p"] = model.spec.p;
    spec["momentum"] = model.spec.momentum;
    manifest["model"] = spec;

    std::vector<char> blob;
    json tensors = json::array();
    auto put = [&](const std::string& name, const std::vector<std::int64_t>& shape,
                   const std::vector<double>& values) {
        json t;
        t["name"] = name;
        t["shape"] = shape;
        t["offset"] = blob.size();
        t["count"] = values.size();
        tensors.push_back(t);
        append_f32(blob, values);
    };

    for (const auto& p : model.params) {
        put(p.name, p.value.shape, p.value.data);
    }
    json running = json::array();
    for (std::size_t li = 0; li < model.norms.size(); ++li) {
        const NormLayer* layer = model.norms[li].get();
        if (layer == nullptr) continue;
        const auto& st = layer->state();
        const std::string base = "norm" + std::to_string(li);
        const std::vector<std::int64_t> shape{st.channels()};
        put(base + "/running_mu", shape, st.running_mu);
        put(base + "/running_sigma2", shape, st.running_sigma2);
        put(base + "/running_lambda", shape, st.running_lambda);
        running.push_back(json{{"layer", li}, {"num_batches", st.num_batches_tracked}});
    }
    manifest["tensors"] = tensors;
    manifest["running"] = running;

    {
        std::ofstream out(dir + "/manifest.json");
        if (!out) throw DomainError("cannot write checkpoint manifest in " + dir);
        out << manifest.dump(2) << "\n";
    }
    {
        std::ofstream out(dir + "/weights.bin", std::ios::binary);
        if (!out) throw DomainError("cannot write checkpoint blob in " + dir);
        out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    }
}

Mlp load_checkpoint(const std::string& dir) {
    std::ifstream mf(dir + "/manifest.json");
    if (!mf) throw DomainError("cannot open checkpoint manifest in " + dir);
    json manifest;
    try {
        mf >> manifest;
    } catch (const std::exception& e) {
        throw DomainError(std::string("bad checkpoint manifest: ") + e.what());
    }
    if (manifest.value("format", "") != std::string("normalnorm-checkpoint-v1")) {
        throw DomainError("unrecognized checkpoint format in " + dir);
    }

    std::ifstream bf(dir + "/weights.bin", std::ios::binary);
    if (!bf) throw DomainError("cannot open checkpoint blob in " + dir);
    std::vector<char> blob((std::istreambuf_iterator<char>(bf)),
                           std::istreambuf_iterator<char>());

    const json& spec_j = manifest.at("model");
    MlpSpec spec;
    spec.widths = spec_j.at("widths").get<std::vector<std::int64_t>>();
    for (const auto& k : spec_j.at("norm_kinds")) {
        spec.norm_kinds.push_back(norm_kind_from_string(k.get<std::string>()));
    }
    spec.grouping = grouping_from_json(spec_j.at("grouping"));
    spec.eps = spec_j.at("eps").get<double>();
    spec.xi = spec_j.at("xi").get<double>();
    spec.alpha = spec_j.at("alpha").get<double>();
    spec.noise_mode = noise_mode_from_string(spec_j.at("noise_mode").get<std::string>());
    spec.p = spec_j.at("p").get<double>();
    spec.momentum = spec_j.at("momentum").get<double>();

    Mlp model = build_mlp(spec, /*seed=*/0);

    auto load_named = [&](const std::string& name) -> std::vector<double> {
        for (const auto& t : manifest.at("tensors")) {
            if (t.at("name").get<std::string>() == name) {
                return read_f32(blob, t.at("offset").get<std::size_t>(),
                                t.at("count").get<std::size_t>());
            }
        }
        throw DomainError("checkpoint is missing tensor: " + name);
    };

    for (auto& p : model.params) {
        const auto values = load_named(p.name);
        if (values.size() != p.value.data.size()) {
            throw DomainError("checkpoint tensor size mismatch for " + p.name);
        }
        p.value.data = values;
    }
    for (std::size_t li = 0; li < model.norms.size(); ++li) {
        NormLayer* layer = model.norms[li].get();
        if (layer == nullptr) continue;
        const std::string base = "norm" + std::to_string(li);
        layer->state().running_mu = load_named(base + "/running_mu");
        layer->state().running_sigma2 = load_named(base + "/running_sigma2");
        layer->state().running_lambda = load_named(base + "/running_lambda");
        for (const auto& r : manifest.at("running")) {
            if (r.at("layer").get<std::size_t>() == li) {
                layer->state().num_batches_tracked = r.at("num_batches").get<std::int64_t>();
            }
        }
    }
    model.sync_norm_params();
    return model;
}

} // namespace normalnorm
