#pragma once

#include <string>

#include "optfs/models.hpp"
#include "optfs/trainer.hpp"

namespace optfs {

// Resolved experiment configuration: "model" / "search" / "retrain" sections
// in JSON, with every CLI flag overriding its key. The resolved form is
// persisted into the run directory.
struct RunConfig {
    ModelConfig model;
    TrainConfig train;
    std::string retrain_init = "co";
    std::string manifest_id;  // producing run, set when persisted into a run dir

    std::string to_json() const;
    static RunConfig from_json(const std::string& text);
    static RunConfig load(const std::string& path);
    void save(const std::string& path) const;
};

}  // namespace optfs
