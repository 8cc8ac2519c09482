#include "a2f/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>

#include <nlohmann/json.hpp>

namespace a2f {

namespace {

std::uint64_t fnv1a(const unsigned char* data, std::size_t len) {
    std::uint64_t hash = 0xcbf29ce484222325ULL;
    for (std::size_t i = 0; i < len; ++i) {
        hash ^= data[i];
        hash *= 0x100000001b3ULL;
    }
    return hash;
}

struct Writer {
    std::vector<unsigned char> bytes;

    void u32(std::uint32_t v) {
        bytes.push_back(static_cast<unsigned char>(v));
        bytes.push_back(static_cast<unsigned char>(v >> 8));
        bytes.push_back(static_cast<unsigned char>(v >> 16));
        bytes.push_back(static_cast<unsigned char>(v >> 24));
    }

    void u64(std::uint64_t v) {
        u32(static_cast<std::uint32_t>(v));
        u32(static_cast<std::uint32_t>(v >> 32));
    }

    void raw(const void* p, std::size_t len) {
        const auto* b = static_cast<const unsigned char*>(p);
        bytes.insert(bytes.end(), b, b + len);
    }

    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        raw(s.data(), s.size());
    }

    void tensor_entry(const std::string& name, const Tensor& t) {
        str(name);
        u32(4);
        u32(static_cast<std::uint32_t>(t.n()));
        u32(static_cast<std::uint32_t>(t.c()));
        u32(static_cast<std::uint32_t>(t.h()));
        u32(static_cast<std::uint32_t>(t.w()));
        for (std::int64_t i = 0; i < t.size(); ++i) {
            std::uint32_t bits;
            const float f = t[i];
            std::memcpy(&bits, &f, 4);
            u32(bits);
        }
    }
};

struct Reader {
    const unsigned char* p;
    std::size_t len;
    std::size_t pos = 0;
    std::filesystem::path path;

    void need(std::size_t count) {
        if (pos + count > len) {
            throw CheckpointError(CheckpointFault::Truncated,
                                  "truncated checkpoint " + path.string());
        }
    }

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = static_cast<std::uint32_t>(p[pos]) |
                          (static_cast<std::uint32_t>(p[pos + 1]) << 8) |
                          (static_cast<std::uint32_t>(p[pos + 2]) << 16) |
                          (static_cast<std::uint32_t>(p[pos + 3]) << 24);
        pos += 4;
        return v;
    }

    std::string str() {
        const std::uint32_t n = u32();
        need(n);
        std::string s(reinterpret_cast<const char*>(p + pos), n);
        pos += n;
        return s;
    }

    Tensor tensor_payload() {
        const std::uint32_t rank = u32();
        if (rank != 4) {
            throw CheckpointError(CheckpointFault::ShapeMismatch,
                                  "unexpected tensor rank " + std::to_string(rank) + " in " +
                                      path.string());
        }
        Shape s{};
        s.n = static_cast<int>(u32());
        s.c = static_cast<int>(u32());
        s.h = static_cast<int>(u32());
        s.w = static_cast<int>(u32());
        if (s.n < 1 || s.c < 1 || s.h < 1 || s.w < 1 || s.numel() > (1LL << 31)) {
            throw CheckpointError(CheckpointFault::ShapeMismatch,
                                  "bad tensor shape " + s.str() + " in " + path.string());
        }
        Tensor t(s);
        need(static_cast<std::size_t>(t.size()) * 4);
        for (std::int64_t i = 0; i < t.size(); ++i) {
            const std::uint32_t bits = u32();
            float f;
            std::memcpy(&f, &bits, 4);
            t[i] = f;
        }
        return t;
    }
};

}  // namespace

void save_checkpoint(const Model& model, const AdamState* optimizer, const CheckpointMeta& meta,
                     const std::filesystem::path& path) {
    Model& m = const_cast<Model&>(model);
    std::vector<NamedParam> params = collect_params(m);
    if (optimizer && optimizer->initialized() && optimizer->m.size() != params.size()) {
        throw ConfigError("save_checkpoint: optimizer state does not match the model");
    }

    nlohmann::json j;
    j["config"] = nlohmann::json::parse(config_to_json(model.config));
    j["metadata"] = {{"step", meta.step}, {"seed", meta.seed}, {"loss_tail", meta.loss_tail}};
    const bool with_opt = optimizer && optimizer->initialized();
    j["optimizer"] = {{"present", with_opt}, {"t", with_opt ? optimizer->t : 0}};
    const std::string json_text = j.dump();

    Writer w;
    w.raw("A2FC", 4);
    w.u32(kCheckpointVersion);
    w.str(json_text);

    const std::uint32_t entries =
        static_cast<std::uint32_t>(params.size() * (with_opt ? 3 : 1));
    w.u32(entries);
    for (const auto& np : params) w.tensor_entry(np.name, np.param->value);
    if (with_opt) {
        for (std::size_t i = 0; i < params.size(); ++i) {
            w.tensor_entry("adam.m." + params[i].name, optimizer->m[i]);
        }
        for (std::size_t i = 0; i < params.size(); ++i) {
            w.tensor_entry("adam.v." + params[i].name, optimizer->v[i]);
        }
    }
    w.u64(fnv1a(w.bytes.data(), w.bytes.size()));

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw StorageError("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(w.bytes.data()),
              static_cast<std::streamsize>(w.bytes.size()));
    if (!out) throw StorageError("failed writing checkpoint " + path.string());
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw CheckpointError(CheckpointFault::Io, "cannot open checkpoint " + path.string());
    }
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
    if (bytes.size() < 16) {
        throw CheckpointError(CheckpointFault::Truncated,
                              "checkpoint too small: " + path.string());
    }
    if (std::memcmp(bytes.data(), "A2FC", 4) != 0) {
        throw CheckpointError(CheckpointFault::BadMagic,
                              "not an A2F checkpoint: " + path.string());
    }
    const std::uint64_t stored = [&bytes]() {
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) {
            v |= static_cast<std::uint64_t>(bytes[bytes.size() - 8 + static_cast<std::size_t>(i)])
                 << (8 * i);
        }
        return v;
    }();
    if (fnv1a(bytes.data(), bytes.size() - 8) != stored) {
        throw CheckpointError(CheckpointFault::BadChecksum,
                              "checksum mismatch in " + path.string());
    }

    Reader r{bytes.data(), bytes.size() - 8, 4, path};
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion) {
        throw CheckpointError(CheckpointFault::BadVersion,
                              "unsupported checkpoint version " + std::to_string(version));
    }

    nlohmann::json j;
    ModelConfig config;
    try {
        j = nlohmann::json::parse(r.str());
        config = config_from_json(j.at("config").dump());
    } catch (const CheckpointError&) {
        throw;
    } catch (const std::exception& e) {
        throw CheckpointError(CheckpointFault::Truncated,
                              "bad checkpoint header in " + path.string() + ": " + e.what());
    }

    LoadedCheckpoint result{build_model(config, 0), std::nullopt, {}};
    const auto& md = j.at("metadata");
    result.meta.step = md.at("step").get<std::uint64_t>();
    result.meta.seed = md.at("seed").get<std::uint64_t>();
    result.meta.loss_tail = md.at("loss_tail").get<std::vector<float>>();

    const std::uint32_t entries = r.u32();
    std::map<std::string, Tensor> loaded;
    for (std::uint32_t i = 0; i < entries; ++i) {
        std::string name = r.str();
        Tensor t = r.tensor_payload();
        if (!loaded.emplace(std::move(name), std::move(t)).second) {
            throw CheckpointError(CheckpointFault::ShapeMismatch,
                                  "duplicate entry in " + path.string());
        }
    }
    if (r.pos != r.len) {
        throw CheckpointError(CheckpointFault::Truncated,
                              "trailing bytes in " + path.string());
    }

    std::vector<NamedParam> params = collect_params(result.model);
    auto take = [&loaded, &path](const std::string& name) {
        auto it = loaded.find(name);
        if (it == loaded.end()) {
            throw CheckpointError(CheckpointFault::MissingEntry,
                                  "checkpoint " + path.string() + " lacks tensor '" + name +
                                      "' required by its config");
        }
        Tensor t = std::move(it->second);
        loaded.erase(it);
        return t;
    };
    for (auto& np : params) {
        Tensor t = take(np.name);
        if (!(t.shape() == np.param->value.shape())) {
            throw CheckpointError(CheckpointFault::ShapeMismatch,
                                  "tensor '" + np.name + "' has shape " + t.shape().str() +
                                      " but config requires " + np.param->value.shape().str());
        }
        np.param->value = std::move(t);
    }

    const bool with_opt = j.at("optimizer").at("present").get<bool>();
    if (with_opt) {
        AdamState state;
        state.t = j.at("optimizer").at("t").get<std::int64_t>();
        state.m.reserve(params.size());
        state.v.reserve(params.size());
        for (const auto& np : params) {
            Tensor t = take("adam.m." + np.name);
            if (!(t.shape() == np.param->value.shape())) {
                throw CheckpointError(CheckpointFault::ShapeMismatch,
                                      "optimizer moment shape mismatch for " + np.name);
            }
            state.m.push_back(std::move(t));
        }
        for (const auto& np : params) {
            Tensor t = take("adam.v." + np.name);
            if (!(t.shape() == np.param->value.shape())) {
                throw CheckpointError(CheckpointFault::ShapeMismatch,
                                      "optimizer moment shape mismatch for " + np.name);
            }
            state.v.push_back(std::move(t));
        }
        result.optimizer = std::move(state);
    }
    if (!loaded.empty()) {
        throw CheckpointError(CheckpointFault::ShapeMismatch,
                              "checkpoint " + path.string() + " holds unexpected tensor '" +
                                  loaded.begin()->first + "'");
    }
    return result;
}

}  // namespace a2f
