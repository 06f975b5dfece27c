#include "hdrfuse/config.hpp"

#include <fstream>
#include <sstream>

namespace hdrfuse {

void NetworkConfig::validate() const {
    if (dtype != "f32" && dtype != "f64") throw UsageError("config: dtype must be f32 or f64");
    if (embed_dim < 1 || shallow_channels < 1) throw UsageError("config: channel counts must be positive");
    if (num_ctb < 1 || cavits_per_ctb < 1) throw UsageError("config: need at least one CTB and one CA-ViT");
    if (window_size < 2) throw UsageError("config: window size must be >= 2");
    if (heads < 1 || embed_dim % heads != 0) {
        throw UsageError("config: embed_dim must be divisible by heads");
    }
    if (mlp_ratio < 1) throw UsageError("config: mlp_ratio must be >= 1");
    if (lce_reduction < 1) throw UsageError("config: lce_reduction must be >= 1");
    if (dilation < 1) throw UsageError("config: dilation must be >= 1");
    if (input_channels != 6) throw UsageError("config: input_channels is fixed at 6");
    if (output_channels != 3) throw UsageError("config: output_channels is fixed at 3");
    if (shallow_channels != embed_dim) {
        throw UsageError("config: shallow_channels must equal embed_dim (identity global skip)");
    }
}

std::map<std::string, std::string> parse_kv_lines(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        auto trim = [](std::string s) {
            auto b = s.find_first_not_of(" \t\r");
            auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        std::string t = trim(line);
        if (t.empty()) continue;
        auto eq = t.find('=');
        if (eq == std::string::npos) {
            throw UsageError("config line " + std::to_string(lineno) + " is not key = value: " + t);
        }
        kv[trim(t.substr(0, eq))] = trim(t.substr(eq + 1));
    }
    return kv;
}

NetworkConfig parse_network_config(const std::string& text) {
    NetworkConfig cfg;
    auto kv = parse_kv_lines(text);
    auto geti = [&](const std::string& key, int& slot) {
        auto it = kv.find(key);
        if (it == kv.end()) return;
        try {
            slot = std::stoi(it->second);
        } catch (const std::exception&) {
            throw UsageError("config: " + key + " is not an integer: " + it->second);
        }
        kv.erase(it);
    };
    if (auto it = kv.find("dtype"); it != kv.end()) {
        cfg.dtype = it->second;
        kv.erase(it);
    }
    geti("embed_dim", cfg.embed_dim);
    geti("shallow_channels", cfg.shallow_channels);
    geti("num_ctb", cfg.num_ctb);
    geti("cavits_per_ctb", cfg.cavits_per_ctb);
    geti("window_size", cfg.window_size);
    geti("heads", cfg.heads);
    geti("mlp_ratio", cfg.mlp_ratio);
    geti("lce_reduction", cfg.lce_reduction);
    geti("dilation", cfg.dilation);
    geti("input_channels", cfg.input_channels);
    geti("output_channels", cfg.output_channels);
    if (!kv.empty()) throw UsageError("config: unknown key: " + kv.begin()->first);
    cfg.validate();
    return cfg;
}

std::string serialize_network_config(const NetworkConfig& cfg) {
    std::ostringstream os;
    os << "dtype = " << cfg.dtype << "\n";
    os << "embed_dim = " << cfg.embed_dim << "\n";
    os << "shallow_channels = " << cfg.shallow_channels << "\n";
    os << "num_ctb = " << cfg.num_ctb << "\n";
    os << "cavits_per_ctb = " << cfg.cavits_per_ctb << "\n";
    os << "window_size = " << cfg.window_size << "\n";
    os << "heads = " << cfg.heads << "\n";
    os << "mlp_ratio = " << cfg.mlp_ratio << "\n";
    os << "lce_reduction = " << cfg.lce_reduction << "\n";
    os << "dilation = " << cfg.dilation << "\n";
    os << "input_channels = " << cfg.input_channels << "\n";
    os << "output_channels = " << cfg.output_channels << "\n";
    return os.str();
}

NetworkConfig load_network_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open config file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_network_config(ss.str());
}

}  // namespace hdrfuse
