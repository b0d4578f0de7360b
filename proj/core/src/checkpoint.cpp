#include <istream>
#include <ostream>

#include "dlstm/errors.hpp"
#include "dlstm/neural.hpp"
#include "json.hpp"

namespace dlstm {
namespace {

using nlohmann::json;

constexpr const char* kFormat = "dlstm.checkpoint";
constexpr int kVersion = 1;

json tensors_to_json(const LstmParams& p) {
  json out = json::object();
  for (const auto& t : p.tensors()) {
    out[t.name] = {{"shape", {t.rows, t.cols}},
                   {"data", std::vector<double>(t.data, t.data + t.size())}};
  }
  return out;
}

void tensors_from_json(const json& j, LstmParams& p) {
  for (auto& t : p.tensors()) {
    if (!j.contains(t.name)) throw ParseError("checkpoint is missing tensor '" + t.name + "'");
    const auto& entry = j.at(t.name);
    const auto shape = entry.at("shape").get<std::vector<Eigen::Index>>();
    const auto data = entry.at("data").get<std::vector<double>>();
    if (shape.size() != 2 || shape[0] != t.rows || shape[1] != t.cols ||
        static_cast<Eigen::Index>(data.size()) != t.size()) {
      throw ParseError("checkpoint tensor '" + t.name + "' has the wrong shape");
    }
    std::copy(data.begin(), data.end(), t.data);
  }
}

}  // namespace

void write_checkpoint(std::ostream& out, const LstmParams& p, const OptState* opt) {
  json doc = {{"format", kFormat},
              {"version", kVersion},
              {"input_dim", p.input_dim},
              {"hidden_dim", p.hidden_dim},
              {"params", tensors_to_json(p)}};
  if (opt) {
    doc["optimizer"] = {{"rho", opt->config.rho},
                        {"eps", opt->config.eps},
                        {"mean_sq_grad", tensors_to_json(opt->mean_sq_grad)},
                        {"mean_sq_delta", tensors_to_json(opt->mean_sq_delta)}};
  }
  out << doc.dump(1) << '\n';
}

Checkpoint read_checkpoint(std::istream& in) {
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw ParseError(std::string("checkpoint is not valid JSON: ") + e.what());
  }
  try {
    if (doc.at("format") != kFormat) throw ParseError("not a dlstm checkpoint");
    if (doc.at("version") != kVersion) throw ParseError("unsupported checkpoint version");
    Checkpoint ck{LstmParams::zeros(doc.at("input_dim").get<int>(), doc.at("hidden_dim").get<int>()),
                  std::nullopt};
    tensors_from_json(doc.at("params"), ck.params);
    if (doc.contains("optimizer")) {
      const auto& o = doc.at("optimizer");
      OptState opt = OptState::for_params(
          ck.params, AdaDeltaConfig{o.at("rho").get<double>(), o.at("eps").get<double>()});
      tensors_from_json(o.at("mean_sq_grad"), opt.mean_sq_grad);
      tensors_from_json(o.at("mean_sq_delta"), opt.mean_sq_delta);
      ck.optimizer = std::move(opt);
    }
    return ck;
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed checkpoint: ") + e.what());
  }
}

}  // namespace dlstm
