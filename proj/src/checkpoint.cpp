#include "xgkit/checkpoint.hpp"

#include "xgkit/errors.hpp"

#include "json.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace xgkit {

using nlohmann::json;

namespace {

constexpr std::string_view kMagic = "XGCKPT1\n";

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
        out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFU));
    }
}

std::uint64_t get_u64(const std::string& in, std::size_t at) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
        v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[at + static_cast<std::size_t>(i)])) << (8 * i);
    }
    return v;
}

void put_doubles(std::string& out, const double* data, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        put_u64(out, std::bit_cast<std::uint64_t>(data[i]));
    }
}

struct ArraySpec {
    std::string name;
    std::size_t rows;
    std::size_t cols;
};

} // namespace

Backbone Checkpoint::backbone() const {
    if (!backbone_config) {
        throw InputError("checkpoint at step " + std::to_string(step) + " holds no backbone");
    }
    return Backbone(*backbone_config, backbone_params);
}

const Prompt& Checkpoint::prompt(const std::string& name) const {
    const auto it = prompts.find(name);
    if (it == prompts.end()) {
        throw InputError("checkpoint at step " + std::to_string(step) + " has no prompt '" + name + "'");
    }
    return it->second;
}

std::string checkpoint_filename(std::int64_t step) {
    std::string digits = std::to_string(step);
    if (digits.size() < 6) {
        digits.insert(0, 6 - digits.size(), '0');
    }
    return "ckpt-" + digits + ".bin";
}

std::string serialize_checkpoint(const Checkpoint& c) {
    std::vector<ArraySpec> arrays;
    std::vector<const double*> sources;
    if (c.backbone_config) {
        arrays.push_back({"backbone", 1, c.backbone_params.size()});
        sources.push_back(c.backbone_params.data());
    }
    for (const auto& [name, p] : c.prompts) {
        arrays.push_back({"prompt/" + name, static_cast<std::size_t>(p.length()), static_cast<std::size_t>(p.d_model())});
        sources.push_back(p.values().data());
    }
    json opt_blocks = json::array();
    for (const auto& b : c.optimizer_state) {
        opt_blocks.push_back({{"name", b.name}, {"t", b.t}, {"size", b.m.size()}});
        if (!b.m.empty()) {
            arrays.push_back({"adam_m/" + b.name, 1, b.m.size()});
            sources.push_back(b.m.data());
            arrays.push_back({"adam_v/" + b.name, 1, b.v.size()});
            sources.push_back(b.v.data());
        }
    }
    nlohmann::ordered_json meta;
    meta["step"] = c.step;
    meta["kind"] = c.kind;
    meta["config_hash"] = c.config_hash;
    meta["backbone_fingerprint"] = c.backbone_fingerprint;
    meta["data_hash"] = c.data_hash;
    meta["examples_consumed"] = c.examples_consumed;
    meta["rng_state"] = c.rng_state;
    meta["loss"] = std::bit_cast<std::uint64_t>(c.loss); // exact
    if (c.backbone_config) {
        meta["backbone_config"] = json::parse(c.backbone_config->to_json());
    }
    const auto& oc = c.optimizer_config;
    meta["optimizer"] = {{"kind", oc.kind},   {"lr", oc.lr},   {"beta1", oc.beta1},
                         {"beta2", oc.beta2}, {"eps", oc.eps}, {"clip_norm", oc.clip_norm}};
    meta["optimizer_blocks"] = opt_blocks;
    json shapes = json::array();
    for (const auto& a : arrays) {
        shapes.push_back({{"name", a.name}, {"rows", a.rows}, {"cols", a.cols}});
    }
    meta["arrays"] = shapes;
    const std::string header = meta.dump();

    std::string out(kMagic);
    put_u64(out, header.size());
    out += header;
    for (std::size_t i = 0; i < arrays.size(); ++i) {
        put_doubles(out, sources[i], arrays[i].rows * arrays[i].cols);
    }
    return out;
}

Checkpoint parse_checkpoint(const std::string& bytes) {
    if (bytes.size() < kMagic.size() + 8 || bytes.compare(0, kMagic.size(), kMagic) != 0) {
        throw FormatError("not a checkpoint file (bad magic)");
    }
    const std::uint64_t header_len = get_u64(bytes, kMagic.size());
    const std::size_t header_at = kMagic.size() + 8;
    if (header_len > bytes.size() - header_at) {
        throw CorruptionError("checkpoint header runs past end of file");
    }
    Checkpoint c;
    std::size_t at = header_at + header_len;
    try {
        const json meta = json::parse(bytes.substr(header_at, header_len));
        c.step = meta.at("step").get<std::int64_t>();
        c.kind = meta.at("kind").get<std::string>();
        c.config_hash = meta.at("config_hash").get<std::string>();
        c.backbone_fingerprint = meta.at("backbone_fingerprint").get<std::string>();
        c.data_hash = meta.at("data_hash").get<std::string>();
        c.examples_consumed = meta.at("examples_consumed").get<std::uint64_t>();
        c.rng_state = meta.at("rng_state").get<std::string>();
        c.loss = std::bit_cast<double>(meta.at("loss").get<std::uint64_t>());
        if (meta.contains("backbone_config")) {
            c.backbone_config = BackboneConfig::from_json(meta["backbone_config"].dump());
        }
        const auto& o = meta.at("optimizer");
        c.optimizer_config.kind = o.at("kind").get<std::string>();
        c.optimizer_config.lr = o.at("lr").get<double>();
        c.optimizer_config.beta1 = o.at("beta1").get<double>();
        c.optimizer_config.beta2 = o.at("beta2").get<double>();
        c.optimizer_config.eps = o.at("eps").get<double>();
        c.optimizer_config.clip_norm = o.at("clip_norm").get<double>();
        std::map<std::string, std::size_t> block_of;
        for (const auto& b : meta.at("optimizer_blocks")) {
            Optimizer::Block blk;
            blk.name = b.at("name").get<std::string>();
            blk.t = b.at("t").get<std::int64_t>();
            block_of[blk.name] = c.optimizer_state.size();
            c.optimizer_state.push_back(std::move(blk));
        }
        for (const auto& a : meta.at("arrays")) {
            const auto name = a.at("name").get<std::string>();
            const auto rows = a.at("rows").get<std::size_t>();
            const auto cols = a.at("cols").get<std::size_t>();
            const std::size_t n = rows * cols;
            if (n > (bytes.size() - at) / 8) {
                throw CorruptionError("checkpoint array '" + name + "' is truncated");
            }
            std::vector<double> data(n);
            for (std::size_t i = 0; i < n; ++i) {
                data[i] = std::bit_cast<double>(get_u64(bytes, at + 8 * i));
            }
            at += 8 * n;
            if (name == "backbone") {
                c.backbone_params = std::move(data);
            } else if (name.rfind("prompt/", 0) == 0) {
                Mat m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
                std::copy(data.begin(), data.end(), m.data());
                c.prompts.emplace(name.substr(7), Prompt(std::move(m)));
            } else if (name.rfind("adam_m/", 0) == 0 || name.rfind("adam_v/", 0) == 0) {
                const auto it = block_of.find(name.substr(7));
                if (it == block_of.end()) {
                    throw FormatError("optimizer array '" + name + "' has no block");
                }
                auto& blk = c.optimizer_state[it->second];
                (name[5] == 'm' ? blk.m : blk.v) = std::move(data);
            } else {
                throw FormatError("unknown checkpoint array '" + name + "'");
            }
        }
    } catch (const json::exception& e) {
        throw FormatError(std::string("checkpoint metadata: ") + e.what());
    }
    if (at != bytes.size()) {
        throw CorruptionError("checkpoint has trailing bytes");
    }
    if (c.backbone_config) {
        Backbone check(*c.backbone_config, c.backbone_params); // validates the size
        (void)check;
    }
    return c;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    const std::string bytes = serialize_checkpoint(ckpt);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot write checkpoint " + path);
    }
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw IoError("short write to " + path);
    }
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot read checkpoint " + path);
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_checkpoint(ss.str());
}

} // namespace xgkit
