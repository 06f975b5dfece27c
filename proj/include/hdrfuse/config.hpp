#pragma once

#include <map>
#include <string>

#include "hdrfuse/errors.hpp"

namespace hdrfuse {

// Architecture hyperparameters. Defaults are the full-scale model; tiny() is
// the desk-scale configuration used by verification runs.
struct NetworkConfig {
    std::string dtype = "f32";  // f32 | f64
    int embed_dim = 54;         // D
    int shallow_channels = 54;  // C, equal to D so the skip is an identity add
    int num_ctb = 3;            // N
    int cavits_per_ctb = 6;     // M
    int window_size = 8;
    int heads = 6;
    int mlp_ratio = 2;
    int lce_reduction = 6;
    int dilation = 2;
    int input_channels = 6;
    int output_channels = 3;

    void validate() const;

    static NetworkConfig full_default() { return {}; }
    static NetworkConfig tiny() {
        NetworkConfig c;
        c.embed_dim = 24;
        c.shallow_channels = 24;
        c.num_ctb = 1;
        c.cavits_per_ctb = 2;
        c.window_size = 8;
        c.heads = 3;  // head width 8 keeps the attention kernels vector-friendly
        return c;
    }
};

// key = value text, one pair per line, '#' comments. Unknown keys are errors
// so config typos cannot silently train the wrong model.
NetworkConfig parse_network_config(const std::string& text);
std::string serialize_network_config(const NetworkConfig& cfg);
NetworkConfig load_network_config(const std::string& path);

// Generic key=value splitter shared with the checkpoint container.
std::map<std::string, std::string> parse_kv_lines(const std::string& text);

}  // namespace hdrfuse
