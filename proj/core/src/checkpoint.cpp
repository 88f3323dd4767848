#include "framecast/checkpoint.hpp"

#include <cstdio>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "framecast/error.hpp"

namespace framecast {

using nlohmann::json;

namespace {

constexpr const char* kMagicLine = "FCCK1";
constexpr const char* kMagicName = "framecast-checkpoint";

std::string hex64(std::uint64_t x) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(x));
  return buf;
}

void write_raw(std::ostream& os, const Tensor& t) {
  os.write(reinterpret_cast<const char*>(t.data()),
           static_cast<std::streamsize>(t.size() * sizeof(double)));
}

Tensor read_raw(std::istream& is, Shape shape) {
  Tensor t(std::move(shape));
  is.read(reinterpret_cast<char*>(t.data()),
          static_cast<std::streamsize>(t.size() * sizeof(double)));
  if (!is) fail(ErrorKind::io, "checkpoint is truncated");
  return t;
}

struct GroupRef {
  const char* name;
  ParamSet* set;
  Adam* opt;
};

std::vector<GroupRef> group_refs(TrainState& st) {
  return {{"model", &st.model, &st.opt_model},
          {"d", &st.d, &st.opt_d},
          {"dvae", &st.dvae, &st.opt_dvae},
          {"dm1", &st.dm1, &st.opt_dm1},
          {"dm2", &st.dm2, &st.opt_dm2}};
}

json param_directory(const ParamSet& ps) {
  json dir = json::array();
  for (const auto& p : ps.all()) dir.push_back({{"name", p->name()}, {"shape", p->value().shape()}});
  return dir;
}

// Overwrites ps values from the stream, insisting the saved directory matches
// the freshly built one name-for-name (same config must rebuild the same net).
void restore_group(std::istream& is, ParamSet& ps, const json& dir, const std::string& group) {
  if (!dir.is_array() || dir.size() != static_cast<std::size_t>(ps.count()))
    fail(ErrorKind::io, "checkpoint directory mismatch in group " + group);
  std::size_t i = 0;
  for (const auto& p : ps.all()) {
    const json& e = dir[i++];
    if (e.at("name").get<std::string>() != p->name())
      fail(ErrorKind::io, "checkpoint directory mismatch in group " + group + ": expected " +
                              p->name() + ", found " + e.at("name").get<std::string>());
    Shape shape = e.at("shape").get<Shape>();
    if (shape != p->value().shape())
      fail(ErrorKind::io, "checkpoint shape mismatch for " + p->name());
    p->value() = read_raw(is, std::move(shape));
  }
}

void check_digest(const ParamSet& ps, const json& expected, const std::string& group) {
  if (hex64(ps.value_digest()) != expected.get<std::string>())
    fail(ErrorKind::io, "checkpoint digest mismatch in group " + group);
}

}  // namespace

void save_checkpoint(const TrainState& st, const std::string& path) {
  json h;
  h["magic"] = kMagicName;
  h["version"] = 1;
  h["config"] = json::parse(model_config_to_json(st.cfg));
  h["step"] = st.step;
  h["rng"] = {{"order", st.order_rng.save_state()}, {"noise", st.noise_rng.save_state()}};

  auto groups = group_refs(const_cast<TrainState&>(st));
  json gj = json::array();
  for (const auto& g : groups)
    gj.push_back({{"group", g.name},
                  {"digest", hex64(g.set->value_digest())},
                  {"params", param_directory(*g.set)}});
  h["groups"] = std::move(gj);

  h["ae"] = {{"config",
              {{"in_channels", st.ae.cfg.in_channels},
               {"height", st.ae.cfg.height},
               {"width", st.ae.cfg.width},
               {"features", st.ae.cfg.features},
               {"manifold_dim", st.ae.cfg.manifold_dim}}},
             {"frozen", st.ae.frozen},
             {"digest", hex64(st.ae.digest())},
             {"report",
              {{"before", st.ae.report.heldout_before},
               {"after", st.ae.report.heldout_after},
               {"steps", st.ae.report.steps}}},
             {"params", param_directory(st.ae.params)}};

  json oj = json::array();
  for (const auto& g : groups) {
    json names = json::array();
    for (const auto& [name, slot] : g.opt->slots()) names.push_back(name);
    oj.push_back({{"group", g.name}, {"t", g.opt->step_count()}, {"slots", std::move(names)}});
  }
  h["optim"] = std::move(oj);

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) fail(ErrorKind::io, "cannot write checkpoint: " + path);
  const std::string header = h.dump();
  os << kMagicLine << " " << header.size() << "\n" << header;

  for (const auto& g : groups)
    for (const auto& p : g.set->all()) write_raw(os, p->value());
  for (const auto& p : st.ae.params.all()) write_raw(os, p->value());
  for (const auto& g : groups)
    for (const auto& [name, slot] : g.opt->slots()) {
      write_raw(os, slot.m);
      write_raw(os, slot.v);
    }
  os.flush();
  if (!os) fail(ErrorKind::io, "failed writing checkpoint: " + path);
}

TrainState load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorKind::io, "cannot open checkpoint: " + path);

  std::string magic_line;
  if (!std::getline(is, magic_line)) fail(ErrorKind::io, "checkpoint is empty: " + path);
  std::size_t json_len = 0;
  {
    char tag[8] = {};
    unsigned long long n = 0;
    if (std::sscanf(magic_line.c_str(), "%7s %llu", tag, &n) != 2 ||
        std::string(tag) != kMagicLine)
      fail(ErrorKind::io, "not a checkpoint file: " + path);
    json_len = static_cast<std::size_t>(n);
  }
  std::string text(json_len, '\0');
  is.read(text.data(), static_cast<std::streamsize>(json_len));
  if (!is) fail(ErrorKind::io, "checkpoint header is truncated");
  json h = json::parse(text, nullptr, false);
  if (h.is_discarded() || h.value("magic", "") != kMagicName)
    fail(ErrorKind::io, "checkpoint header is corrupt");
  if (h.value("version", 0) != 1) fail(ErrorKind::io, "unsupported checkpoint version");

  ModelConfig cfg = model_config_from_json(h.at("config").dump());
  TrainState st = init_train_state(cfg);
  st.step = h.at("step").get<std::int64_t>();
  st.order_rng.load_state(h.at("rng").at("order").get<std::string>());
  st.noise_rng.load_state(h.at("rng").at("noise").get<std::string>());

  auto groups = group_refs(st);
  const json& gj = h.at("groups");
  if (!gj.is_array() || gj.size() != groups.size())
    fail(ErrorKind::io, "checkpoint group list is corrupt");
  for (std::size_t i = 0; i < groups.size(); ++i) {
    if (gj[i].at("group").get<std::string>() != groups[i].name)
      fail(ErrorKind::io, "checkpoint group order is corrupt");
    restore_group(is, *groups[i].set, gj[i].at("params"), groups[i].name);
  }

  const json& aj = h.at("ae");
  AutoencoderConfig acfg;
  acfg.in_channels = aj.at("config").at("in_channels").get<std::int64_t>();
  acfg.height = aj.at("config").at("height").get<std::int64_t>();
  acfg.width = aj.at("config").at("width").get<std::int64_t>();
  acfg.features = aj.at("config").at("features").get<std::int64_t>();
  acfg.manifold_dim = aj.at("config").at("manifold_dim").get<std::int64_t>();
  st.ae = make_autoencoder(acfg, 0);
  restore_group(is, st.ae.params, aj.at("params"), "ae");
  if (aj.at("frozen").get<bool>()) {
    st.ae.params.freeze_all();
    st.ae.frozen = true;
  }
  st.ae.report.heldout_before = aj.at("report").at("before").get<double>();
  st.ae.report.heldout_after = aj.at("report").at("after").get<double>();
  st.ae.report.steps = aj.at("report").at("steps").get<std::int64_t>();

  const json& oj = h.at("optim");
  if (!oj.is_array() || oj.size() != groups.size())
    fail(ErrorKind::io, "checkpoint optimizer list is corrupt");
  for (std::size_t i = 0; i < groups.size(); ++i) {
    if (oj[i].at("group").get<std::string>() != groups[i].name)
      fail(ErrorKind::io, "checkpoint optimizer order is corrupt");
    groups[i].opt->set_step_count(oj[i].at("t").get<std::int64_t>());
    for (const auto& name : oj[i].at("slots")) {
      const std::string pname = name.get<std::string>();
      const Shape& shape = groups[i].set->require(pname).value().shape();
      Tensor m = read_raw(is, shape);
      Tensor v = read_raw(is, shape);
      groups[i].opt->restore_slot(pname, std::move(m), std::move(v));
    }
  }

  for (std::size_t i = 0; i < groups.size(); ++i)
    check_digest(*groups[i].set, gj[i].at("digest"), groups[i].name);
  check_digest(st.ae.params, aj.at("digest"), "ae");

  is.peek();
  if (!is.eof()) fail(ErrorKind::io, "checkpoint has trailing bytes");
  return st;
}

}  // namespace framecast
