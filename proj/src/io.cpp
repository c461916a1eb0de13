#include "sdo/io.hpp"

#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <ostream>
#include <sstream>

namespace sdo {

namespace {

struct ParamField {
    const char* name;
    std::function<void(ModelParams&, const nlohmann::json&)> set;
    std::function<nlohmann::json(const ModelParams&)> get;
};

#define SDO_FIELD(name) \
    ParamField { #name, [](ModelParams& p, const nlohmann::json& v) { p.name = v.get<decltype(p.name)>(); }, \
                 [](const ModelParams& p) { return nlohmann::json(p.name); } }

const std::vector<ParamField>& param_fields() {
    static const std::vector<ParamField> fields{
        SDO_FIELD(n_z),     SDO_FIELD(gamma_I),  SDO_FIELD(gamma_X),   SDO_FIELD(lambda_I),
        SDO_FIELD(lambda_X), SDO_FIELD(sigma_X), SDO_FIELD(D),         SDO_FIELD(alpha_T),
        SDO_FIELD(alpha_D), SDO_FIELD(alpha_X),  SDO_FIELD(alpha_b),   SDO_FIELD(W_rod),
        SDO_FIELD(rod_shape_width), SDO_FIELD(T0), SDO_FIELD(kappa_T), SDO_FIELD(P_nom),
        SDO_FIELD(h_min),   SDO_FIELD(h_max),    SDO_FIELD(h_ref),     SDO_FIELD(u_min),
        SDO_FIELD(u_max),   SDO_FIELD(C_b_min),  SDO_FIELD(C_b_max),   SDO_FIELD(C_b_ref),
        SDO_FIELD(n_sub),   SDO_FIELD(newton_max_iter), SDO_FIELD(newton_tol)};
    return fields;
}

#undef SDO_FIELD

}  // namespace

nlohmann::json to_json(const ModelParams& p) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& f : param_fields()) j[f.name] = f.get(p);
    return j;
}

ModelParams model_params_from_json(const nlohmann::json& j, const ModelParams& base) {
    if (!j.is_object()) throw ConfigError("model parameters must be a JSON object");
    ModelParams p = base;
    std::vector<std::string> bad;
    for (const auto& [key, value] : j.items()) {
        bool found = false;
        for (const auto& f : param_fields()) {
            if (key == f.name) {
                found = true;
                try {
                    f.set(p, value);
                } catch (const nlohmann::json::exception&) {
                    bad.push_back("model." + key + ": wrong type");
                }
            }
        }
        if (!found) bad.push_back("model." + key + ": unknown key");
    }
    if (!bad.empty()) {
        std::ostringstream os;
        os << "invalid model parameters:";
        for (const auto& b : bad) os << " [" << b << "]";
        throw ConfigError(os.str());
    }
    p.validate();
    return p;
}

std::string fnv1a_hex(const std::string& bytes) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string params_hash(const ModelParams& p) { return fnv1a_hex(to_json(p).dump()); }

std::string fmt_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void write_provenance(std::ostream& os, const std::vector<std::pair<std::string, std::string>>& fields) {
    os << '#';
    for (const auto& [k, v] : fields) os << ' ' << k << '=' << v;
    os << '\n';
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream is(line);
    while (std::getline(is, cur, ',')) out.push_back(cur);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

nlohmann::json read_json_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot read " + path);
    try {
        return nlohmann::json::parse(f);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

void write_json_file(const std::string& path, const nlohmann::json& j) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path);
    f << j.dump(2) << '\n';
}

}  // namespace sdo
