#include "optfs/runconfig.hpp"

#include <json.hpp>

#include "optfs/fsio.hpp"

namespace optfs {

using nlohmann::json;

std::string RunConfig::to_json() const {
    json j;
    j["model"] = {{"backbone", backbone_to_string(model.backbone)},
                  {"embed_dim", model.embed_dim},
                  {"mlp_dims", model.mlp_dims},
                  {"cross_depth", model.cross_depth}};
    j["search"] = {{"learning_rate", train.learning_rate},
                   {"l2_reg", train.l2_reg},
                   {"lambda", train.lambda},
                   {"epochs", train.total_epochs},
                   {"rewind_epoch", train.rewind_epoch},
                   {"gamma", train.gamma},
                   {"batch_size", train.batch_size},
                   {"seed", train.seed},
                   {"per_step_tau", train.per_step_tau}};
    j["retrain"] = {{"init", retrain_init},
                    {"epochs", train.retrain_epochs},
                    {"patience", train.patience},
                    {"rewind_optimizer", train.rewind_optimizer}};
    if (!manifest_id.empty()) j["manifest_id"] = manifest_id;
    return j.dump(2);
}

RunConfig RunConfig::from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: invalid JSON: ") + e.what());
    }
    RunConfig c;
    if (j.contains("model")) {
        const auto& m = j["model"];
        if (m.contains("backbone")) c.model.backbone = backbone_from_string(m["backbone"]);
        c.model.embed_dim = m.value("embed_dim", c.model.embed_dim);
        if (m.contains("mlp_dims")) c.model.mlp_dims = m["mlp_dims"].get<std::vector<int>>();
        c.model.cross_depth = m.value("cross_depth", c.model.cross_depth);
    }
    if (j.contains("search")) {
        const auto& s = j["search"];
        c.train.learning_rate = s.value("learning_rate", c.train.learning_rate);
        c.train.l2_reg = s.value("l2_reg", c.train.l2_reg);
        c.train.lambda = s.value("lambda", c.train.lambda);
        c.train.total_epochs = s.value("epochs", c.train.total_epochs);
        c.train.rewind_epoch = s.value("rewind_epoch", c.train.rewind_epoch);
        c.train.gamma = s.value("gamma", c.train.gamma);
        c.train.batch_size = s.value("batch_size", c.train.batch_size);
        c.train.seed = s.value("seed", c.train.seed);
        c.train.per_step_tau = s.value("per_step_tau", c.train.per_step_tau);
    }
    if (j.contains("retrain")) {
        const auto& r = j["retrain"];
        c.retrain_init = r.value("init", c.retrain_init);
        retrain_init_from_string(c.retrain_init);  // validate
        c.train.retrain_epochs = r.value("epochs", c.train.retrain_epochs);
        c.train.patience = r.value("patience", c.train.patience);
        c.train.rewind_optimizer = r.value("rewind_optimizer", c.train.rewind_optimizer);
    }
    c.manifest_id = j.value("manifest_id", "");
    return c;
}

RunConfig RunConfig::load(const std::string& path) {
    return from_json(read_file(path));
}

void RunConfig::save(const std::string& path) const {
    write_file(path, to_json() + "\n");
}

}  // namespace optfs
