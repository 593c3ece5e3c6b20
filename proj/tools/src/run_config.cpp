#include "vmsgan_cli/run_config.hpp"

#include <fstream>

#include "vmsgan/error.hpp"

namespace vmsgan::cli {

using nlohmann::json;

void to_json(json& j, const RunConfig& c) {
  const auto& f = c.fid.protocol;
  const auto& p = c.pairs;
  j = json{
      {"seed", c.seed},
      {"data",
       {{"manifest", c.data.manifest},
        {"predictor_checkpoint", c.data.predictor_checkpoint},
        {"gan_checkpoint", c.data.gan_checkpoint}}},
      {"ingest",
       {{"images", c.ingest.images},
        {"vms", c.ingest.vms},
        {"annotations", c.ingest.annotations},
        {"false_annotations", c.ingest.false_annotations},
        {"responses", c.ingest.responses},
        {"categories", c.ingest.categories},
        {"default_category", c.ingest.default_category},
        {"name", c.ingest.name},
        {"image_resolution", c.ingest.image_resolution},
        {"vms_resolution", c.ingest.vms_resolution}}},
      {"synth",
       {{"n", c.synth.n},
        {"resolution", c.synth.resolution},
        {"observers", c.synth.observers},
        {"annotation_noise", c.synth.annotation_noise},
        {"trials", c.synth.trials}}},
      {"predictor", c.predictor},
      {"predictor_training", {{"holdout", c.predictor_training.holdout}}},
      {"gan", c.gan},
      {"generate",
       {{"n", c.generate.n},
        {"m", c.generate.m},
        {"steps", c.generate.steps},
        {"m_min", c.generate.m_min},
        {"m_max", c.generate.m_max},
        {"target_map", c.generate.target_map},
        {"columns", c.generate.columns}}},
      {"analysis", {{"splits", c.analysis.splits}}},
      {"fid",
       {{"sets", f.sets},
        {"per_set", f.per_set},
        {"real_per_set", f.real_per_set},
        {"m_low", f.m_low},
        {"m_high", f.m_high},
        {"pool", c.fid.pool}}},
      {"pairs",
       {{"n", p.n},
        {"m_low", p.m_low},
        {"m_high", p.m_high},
        {"threshold", p.threshold},
        {"bin_width", p.bin_width},
        {"scorer", p.scorer},
        {"scores", p.scores},
        {"save_images", p.save_images},
        {"window_top", p.window_top},
        {"window_left", p.window_left},
        {"window_size", p.window_size}}},
  };
}

namespace {

template <class T>
void read(const json& section, const char* key, T& value) {
  value = section.value(key, value);
}

json section(const json& j, const char* key) { return j.contains(key) ? j.at(key) : json::object(); }

}  // namespace

void from_json(const json& j, RunConfig& c) {
  read(j, "seed", c.seed);
  const json d = section(j, "data");
  read(d, "manifest", c.data.manifest);
  read(d, "predictor_checkpoint", c.data.predictor_checkpoint);
  read(d, "gan_checkpoint", c.data.gan_checkpoint);
  const json in = section(j, "ingest");
  read(in, "images", c.ingest.images);
  read(in, "vms", c.ingest.vms);
  read(in, "annotations", c.ingest.annotations);
  read(in, "false_annotations", c.ingest.false_annotations);
  read(in, "responses", c.ingest.responses);
  read(in, "categories", c.ingest.categories);
  read(in, "default_category", c.ingest.default_category);
  read(in, "name", c.ingest.name);
  read(in, "image_resolution", c.ingest.image_resolution);
  read(in, "vms_resolution", c.ingest.vms_resolution);
  const json s = section(j, "synth");
  read(s, "n", c.synth.n);
  read(s, "resolution", c.synth.resolution);
  read(s, "observers", c.synth.observers);
  read(s, "annotation_noise", c.synth.annotation_noise);
  read(s, "trials", c.synth.trials);
  if (j.contains("predictor")) from_json(j.at("predictor"), c.predictor);
  read(section(j, "predictor_training"), "holdout", c.predictor_training.holdout);
  if (j.contains("gan")) {
    // Missing keys keep the current values, not the struct defaults.
    json merged = c.gan;
    merged.update(j.at("gan"));
    c.gan = merged.get<GanConfig>();
  }
  const json g = section(j, "generate");
  read(g, "n", c.generate.n);
  read(g, "m", c.generate.m);
  read(g, "steps", c.generate.steps);
  read(g, "m_min", c.generate.m_min);
  read(g, "m_max", c.generate.m_max);
  read(g, "target_map", c.generate.target_map);
  read(g, "columns", c.generate.columns);
  read(section(j, "analysis"), "splits", c.analysis.splits);
  const json f = section(j, "fid");
  read(f, "sets", c.fid.protocol.sets);
  read(f, "per_set", c.fid.protocol.per_set);
  read(f, "real_per_set", c.fid.protocol.real_per_set);
  read(f, "m_low", c.fid.protocol.m_low);
  read(f, "m_high", c.fid.protocol.m_high);
  read(f, "pool", c.fid.pool);
  const json p = section(j, "pairs");
  read(p, "n", c.pairs.n);
  read(p, "m_low", c.pairs.m_low);
  read(p, "m_high", c.pairs.m_high);
  read(p, "threshold", c.pairs.threshold);
  read(p, "bin_width", c.pairs.bin_width);
  read(p, "scorer", c.pairs.scorer);
  read(p, "scores", c.pairs.scores);
  read(p, "save_images", c.pairs.save_images);
  read(p, "window_top", c.pairs.window_top);
  read(p, "window_left", c.pairs.window_left);
  read(p, "window_size", c.pairs.window_size);
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config file " + path.string());
  try {
    json j = json::parse(in);
    // A run_config.json snapshot wraps the settings.
    if (j.contains("config") && j.contains("command")) j = j.at("config");
    RunConfig c;
    from_json(j, c);
    return c;
  } catch (const json::exception& e) {
    throw UsageError("config file " + path.string() + ": " + e.what());
  }
}

void write_run_config(const std::filesystem::path& path, const std::string& command, const RunConfig& config) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << json{{"command", command}, {"config", config}}.dump(2) << '\n';
}

}  // namespace vmsgan::cli
