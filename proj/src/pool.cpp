#include "glider/pool.hpp"

#include <bit>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace glider {

namespace {

using nlohmann::json;

constexpr char kB64Alphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

std::string base64_encode(const std::vector<double>& values) {
    std::string bytes;
    bytes.reserve(values.size() * 8);
    for (double v : values) {
        const auto bits = std::bit_cast<std::uint64_t>(v);
        for (int i = 0; i < 8; ++i) {
            bytes.push_back(static_cast<char>((bits >> (8 * i)) & 0xffu)); // little-endian
        }
    }
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    std::size_t i = 0;
    while (i + 3 <= bytes.size()) {
        const unsigned b0 = static_cast<unsigned char>(bytes[i]);
        const unsigned b1 = static_cast<unsigned char>(bytes[i + 1]);
        const unsigned b2 = static_cast<unsigned char>(bytes[i + 2]);
        out.push_back(kB64Alphabet[b0 >> 2]);
        out.push_back(kB64Alphabet[((b0 & 0x3) << 4) | (b1 >> 4)]);
        out.push_back(kB64Alphabet[((b1 & 0xf) << 2) | (b2 >> 6)]);
        out.push_back(kB64Alphabet[b2 & 0x3f]);
        i += 3;
    }
    const std::size_t rem = bytes.size() - i;
    if (rem == 1) {
        const unsigned b0 = static_cast<unsigned char>(bytes[i]);
        out.push_back(kB64Alphabet[b0 >> 2]);
        out.push_back(kB64Alphabet[(b0 & 0x3) << 4]);
        out.push_back('=');
        out.push_back('=');
    } else if (rem == 2) {
        const unsigned b0 = static_cast<unsigned char>(bytes[i]);
        const unsigned b1 = static_cast<unsigned char>(bytes[i + 1]);
        out.push_back(kB64Alphabet[b0 >> 2]);
        out.push_back(kB64Alphabet[((b0 & 0x3) << 4) | (b1 >> 4)]);
        out.push_back(kB64Alphabet[(b1 & 0xf) << 2]);
        out.push_back('=');
    }
    return out;
}

int b64_value(char c) {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
}

std::vector<double> base64_decode(const std::string& text, std::size_t expect_count,
                                  const std::string& where) {
    if (text.size() % 4 != 0) {
        raise(Errc::corrupt_file, where + ": base64 length not a multiple of 4");
    }
    std::string bytes;
    bytes.reserve(text.size() / 4 * 3);
    for (std::size_t i = 0; i < text.size(); i += 4) {
        int vals[4];
        int pad = 0;
        for (int j = 0; j < 4; ++j) {
            const char c = text[i + j];
            if (c == '=') {
                if (i + 4 != text.size() || j < 2) {
                    raise(Errc::corrupt_file, where + ": stray base64 padding");
                }
                vals[j] = 0;
                ++pad;
            } else {
                vals[j] = b64_value(c);
                if (vals[j] < 0 || pad > 0) {
                    raise(Errc::corrupt_file, where + ": invalid base64 byte");
                }
            }
        }
        bytes.push_back(static_cast<char>((vals[0] << 2) | (vals[1] >> 4)));
        if (pad < 2) bytes.push_back(static_cast<char>(((vals[1] & 0xf) << 4) | (vals[2] >> 2)));
        if (pad < 1) bytes.push_back(static_cast<char>(((vals[2] & 0x3) << 6) | vals[3]));
    }
    if (bytes.size() != expect_count * 8) {
        raise(Errc::corrupt_file, where + ": blob holds " + std::to_string(bytes.size()) +
                                      " bytes, shape implies " + std::to_string(expect_count * 8));
    }
    std::vector<double> values(expect_count);
    for (std::size_t k = 0; k < expect_count; ++k) {
        std::uint64_t bits = 0;
        for (int i = 0; i < 8; ++i) {
            bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[k * 8 + i]))
                    << (8 * i);
        }
        values[k] = std::bit_cast<double>(bits);
    }
    return values;
}

json encode_vec(const Vec& v) {
    return json{{"shape", json::array({v.size()})}, {"blob", base64_encode(v)}};
}

json encode_mat(const Mat& m) {
    return json{{"shape", json::array({m.rows, m.cols})}, {"blob", base64_encode(m.data)}};
}

void require_fields(const json& obj, std::initializer_list<const char*> fields,
                    const std::string& where) {
    for (const char* f : fields) {
        if (!obj.contains(f)) {
            raise(Errc::corrupt_file, where + ": missing field '" + f + "'");
        }
    }
    for (const auto& [key, value] : obj.items()) {
        (void)value;
        bool known = false;
        for (const char* f : fields) {
            if (key == f) {
                known = true;
                break;
            }
        }
        if (!known) {
            raise(Errc::version_mismatch,
                  where + ": unknown field '" + key + "' (file from a newer format?)");
        }
    }
}

Vec decode_vec(const json& obj, std::size_t expect_dim, const std::string& where) {
    require_fields(obj, {"shape", "blob"}, where);
    const auto& shape = obj.at("shape");
    if (!shape.is_array() || shape.size() != 1) {
        raise(Errc::corrupt_file, where + ": vector shape must be [n]");
    }
    const auto n = shape.at(0).get<std::size_t>();
    if (expect_dim != 0 && n != expect_dim) {
        raise(Errc::corrupt_file, where + ": dim " + std::to_string(n) + ", expected " +
                                      std::to_string(expect_dim));
    }
    return base64_decode(obj.at("blob").get<std::string>(), n, where);
}

Mat decode_mat(const json& obj, std::size_t expect_rows, std::size_t expect_cols,
               const std::string& where) {
    require_fields(obj, {"shape", "blob"}, where);
    const auto& shape = obj.at("shape");
    if (!shape.is_array() || shape.size() != 2) {
        raise(Errc::corrupt_file, where + ": matrix shape must be [rows, cols]");
    }
    const auto rows = shape.at(0).get<std::size_t>();
    const auto cols = shape.at(1).get<std::size_t>();
    if ((expect_rows != 0 && rows != expect_rows) || (expect_cols != 0 && cols != expect_cols)) {
        raise(Errc::corrupt_file, where + ": shape " + std::to_string(rows) + "x" +
                                      std::to_string(cols) + " does not match the host layer");
    }
    return Mat(rows, cols, base64_decode(obj.at("blob").get<std::string>(), rows * cols, where));
}

} // namespace

std::optional<std::size_t> ExpertPool::index_of(const std::string& name) const {
    for (std::size_t i = 0; i < experts.size(); ++i) {
        if (experts[i].name == name) return i;
    }
    return std::nullopt;
}

ExpertPool make_pool(std::size_t d, std::size_t m, std::uint64_t seed, std::size_t d_g) {
    ExpertPool pool;
    pool.base = ToyBaseModel::make(d, m, seed);
    pool.d_g = d_g;
    return pool;
}

void add_expert(ExpertPool& pool, ExpertModel expert) {
    if (pool.index_of(expert.name)) {
        raise(Errc::duplicate_name, "add_expert: duplicate expert name '" + expert.name + "'");
    }
    if (expert.modules.size() != pool.base.m) {
        raise(Errc::dim_mismatch, "add_expert: expert '" + expert.name + "' has " +
                                      std::to_string(expert.modules.size()) + " modules, base has " +
                                      std::to_string(pool.base.m));
    }
    for (const LoraModule& mod : expert.modules) {
        if (mod.a.cols != pool.base.d || mod.b.rows != pool.base.d || mod.a.rows != mod.rank ||
            mod.b.cols != mod.rank) {
            raise(Errc::dim_mismatch, "add_expert: module shapes of '" + expert.name +
                                          "' do not match base width " + std::to_string(pool.base.d));
        }
        if (mod.gate && mod.gate->size() != pool.base.d) {
            raise(Errc::dim_mismatch, "add_expert: gate dim of '" + expert.name + "'");
        }
    }
    if (expert.global_vector && expert.global_vector->size() != pool.d_g) {
        raise(Errc::dim_mismatch, "add_expert: global vector dim of '" + expert.name + "' is " +
                                      std::to_string(expert.global_vector->size()) + ", pool d_g is " +
                                      std::to_string(pool.d_g));
    }
    pool.experts.push_back(std::move(expert));
}

std::string pool_to_json(const ExpertPool& pool) {
    json root;
    root["version"] = pool.version;
    root["base"] = {{"d", pool.base.d},
                    {"m", pool.base.m},
                    {"seed", pool.base.seed},
                    {"nonlinearity", pool.base.nonlinearity}};
    root["d_g"] = pool.d_g;
    root["created_by"] = pool.created_by;
    json experts = json::array();
    for (const ExpertModel& e : pool.experts) {
        json je;
        je["name"] = e.name;
        je["task_description"] = e.task_description;
        je["global_vector"] = e.global_vector ? encode_vec(*e.global_vector) : json(nullptr);
        json modules = json::array();
        for (std::size_t l = 0; l < e.modules.size(); ++l) {
            const LoraModule& mod = e.modules[l];
            json jm;
            jm["layer"] = l;
            jm["rank"] = mod.rank;
            jm["lora_scaling"] = mod.lora_scaling;
            jm["A"] = encode_mat(mod.a);
            jm["B"] = encode_mat(mod.b);
            jm["gate"] = mod.gate ? encode_vec(*mod.gate) : json(nullptr);
            modules.push_back(std::move(jm));
        }
        je["modules"] = std::move(modules);
        experts.push_back(std::move(je));
    }
    root["experts"] = std::move(experts);
    return root.dump(2) + "\n";
}

ExpertPool pool_from_json(const std::string& text) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        raise(Errc::corrupt_file,
              "pool file: parse error at byte " + std::to_string(e.byte) + ": " + e.what());
    }
    if (!root.is_object() || !root.contains("version")) {
        raise(Errc::corrupt_file, "pool file: not a pool document");
    }
    if (root.at("version").get<std::string>() != kPoolFormatVersion) {
        raise(Errc::version_mismatch, "pool file: version '" +
                                          root.at("version").get<std::string>() + "', expected '" +
                                          kPoolFormatVersion + "'");
    }
    require_fields(root, {"version", "base", "d_g", "created_by", "experts"}, "pool file");
    const json& jb = root.at("base");
    require_fields(jb, {"d", "m", "seed", "nonlinearity"}, "base");
    if (jb.at("nonlinearity").get<std::string>() != "tanh") {
        raise(Errc::version_mismatch,
              "base: unsupported nonlinearity '" + jb.at("nonlinearity").get<std::string>() + "'");
    }

    ExpertPool pool;
    pool.base = ToyBaseModel::make(jb.at("d").get<std::size_t>(), jb.at("m").get<std::size_t>(),
                                   jb.at("seed").get<std::uint64_t>());
    pool.d_g = root.at("d_g").get<std::size_t>();
    pool.created_by = root.at("created_by").get<std::string>();

    for (const json& je : root.at("experts")) {
        require_fields(je, {"name", "task_description", "global_vector", "modules"}, "expert");
        ExpertModel e;
        e.name = je.at("name").get<std::string>();
        e.task_description = je.at("task_description").get<std::string>();
        if (!je.at("global_vector").is_null()) {
            e.global_vector = decode_vec(je.at("global_vector"), pool.d_g, "global_vector");
        }
        const json& jmods = je.at("modules");
        if (!jmods.is_array() || jmods.size() != pool.base.m) {
            raise(Errc::corrupt_file, "expert '" + e.name + "': expected " +
                                          std::to_string(pool.base.m) + " modules");
        }
        std::size_t expect_layer = 0;
        for (const json& jm : jmods) {
            require_fields(jm, {"layer", "rank", "lora_scaling", "A", "B", "gate"}, "module");
            if (jm.at("layer").get<std::size_t>() != expect_layer) {
                raise(Errc::corrupt_file, "expert '" + e.name + "': modules out of order");
            }
            LoraModule mod;
            mod.rank = jm.at("rank").get<std::size_t>();
            mod.lora_scaling = jm.at("lora_scaling").get<double>();
            mod.a = decode_mat(jm.at("A"), mod.rank, pool.base.d, "A");
            mod.b = decode_mat(jm.at("B"), pool.base.d, mod.rank, "B");
            if (!jm.at("gate").is_null()) {
                mod.gate = decode_vec(jm.at("gate"), pool.base.d, "gate");
            }
            e.modules.push_back(std::move(mod));
            ++expect_layer;
        }
        add_expert(pool, std::move(e)); // re-validates names and dims
    }
    return pool;
}

void save_pool(const ExpertPool& pool, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        raise(Errc::io_error, "save_pool: cannot open " + path.string());
    }
    out << pool_to_json(pool);
    if (!out) {
        raise(Errc::io_error, "save_pool: write failed for " + path.string());
    }
}

ExpertPool load_pool(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        raise(Errc::io_error, "load_pool: cannot open " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return pool_from_json(ss.str());
}

} // namespace glider
