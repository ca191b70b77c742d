#include "poolgen/config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

namespace poolgen {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  for (char ch : s) {
    if (ch == sep) {
      parts.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  parts.push_back(cur);
  return parts;
}

double parse_double(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("cannot parse number '" + s + "' for " + what);
  }
}

long parse_int(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const long v = std::stol(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("cannot parse integer '" + s + "' for " + what);
  }
}

PoolVariant parse_variant(const std::string& s) {
  if (s == "avg") return PoolVariant::Avg;
  if (s == "max") return PoolVariant::Max;
  if (s == "stochastic") return PoolVariant::Stochastic;
  if (s == "mix5050") return PoolVariant::Mix5050;
  if (s == "mixed") return PoolVariant::Mixed;
  if (s == "gated") return PoolVariant::Gated;
  if (s == "tree2") return PoolVariant::Tree2;
  if (s == "tree3") return PoolVariant::Tree3;
  throw ConfigError("unknown pooling variant '" + s + "'");
}

LayerSpec parse_pool_spec(const std::vector<std::string>& toks) {
  LayerSpec spec;
  spec.kind = LayerSpec::Kind::Pool;
  if (toks.size() < 2 || toks[1].empty()) {
    throw ConfigError("pool spec needs a variant, e.g. pool:gated");
  }
  spec.pool_variant = parse_variant(toks[1]);
  for (std::size_t i = 2; i < toks.size(); ++i) {
    const std::string& t = toks[i];
    if (t == "gl") {
      spec.pool_gran = GranularityKind::PerLayer;
    } else if (t == "gcr") {
      spec.pool_gran = GranularityKind::PerLayerChannelRegion;
    } else if (!t.empty() && t[0] == 'r') {
      const auto dims = split(t.substr(1), 'x');
      if (dims.size() != 2) {
        throw ConfigError("pool region must look like r2x2, got '" + t + "'");
      }
      spec.pool_geom.region_h =
          static_cast<int>(parse_int(dims[0], "pool region"));
      spec.pool_geom.region_w =
          static_cast<int>(parse_int(dims[1], "pool region"));
    } else if (!t.empty() && t[0] == 's') {
      spec.pool_geom.stride =
          static_cast<int>(parse_int(t.substr(1), "pool stride"));
    } else if (!t.empty() && t[0] == 'p') {
      spec.pool_geom.padding =
          static_cast<int>(parse_int(t.substr(1), "pool padding"));
    } else {
      throw ConfigError("unknown pool option '" + t + "'");
    }
  }
  return spec;
}

}  // namespace

std::vector<LayerSpec> parse_arch(const std::string& text) {
  std::vector<LayerSpec> arch;
  for (const std::string& raw : split(text, ',')) {
    const std::string item = trim(raw);
    if (item.empty()) {
      throw ConfigError("empty layer spec in architecture");
    }
    const auto toks = split(item, ':');
    const std::string& kind = toks[0];
    LayerSpec spec;
    if (kind == "conv") {
      spec.kind = LayerSpec::Kind::Conv;
      if (toks.size() < 2 || toks.size() > 5) {
        throw ConfigError("conv spec is conv:OUT[:K[:S[:P]]], got '" + item +
                          "'");
      }
      spec.conv_out = static_cast<int>(parse_int(toks[1], "conv channels"));
      if (toks.size() > 2)
        spec.conv_k = static_cast<int>(parse_int(toks[2], "conv kernel"));
      if (toks.size() > 3)
        spec.conv_stride = static_cast<int>(parse_int(toks[3], "conv stride"));
      if (toks.size() > 4)
        spec.conv_pad = static_cast<int>(parse_int(toks[4], "conv padding"));
      if (spec.conv_out < 1 || spec.conv_k < 1 || spec.conv_stride < 1 ||
          spec.conv_pad < 0) {
        throw ConfigError("invalid conv spec '" + item + "'");
      }
    } else if (kind == "relu") {
      if (toks.size() != 1) throw ConfigError("relu takes no options");
      spec.kind = LayerSpec::Kind::Relu;
    } else if (kind == "pool") {
      spec = parse_pool_spec(toks);
    } else if (kind == "dropout") {
      spec.kind = LayerSpec::Kind::Dropout;
      if (toks.size() != 2) {
        throw ConfigError("dropout spec is dropout:RATE, got '" + item + "'");
      }
      spec.dropout_rate = parse_double(toks[1], "dropout rate");
      if (spec.dropout_rate < 0.0 || spec.dropout_rate >= 1.0) {
        throw ConfigError("dropout rate must lie in [0, 1)");
      }
    } else if (kind == "dense") {
      spec.kind = LayerSpec::Kind::Dense;
      if (toks.size() != 2) {
        throw ConfigError("dense spec is dense:UNITS, got '" + item + "'");
      }
      spec.dense_units = static_cast<int>(parse_int(toks[1], "dense units"));
      if (spec.dense_units < 1) {
        throw ConfigError("dense units must be >= 1");
      }
    } else if (kind == "softmax") {
      if (toks.size() != 1) throw ConfigError("softmax takes no options");
      spec.kind = LayerSpec::Kind::Softmax;
    } else {
      throw ConfigError("unknown layer kind '" + kind + "'");
    }
    arch.push_back(spec);
  }
  if (arch.empty() || arch.back().kind != LayerSpec::Kind::Softmax) {
    throw ConfigError("architecture must end with softmax");
  }
  return arch;
}

RunConfig parse_config_text(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(lineno) +
                        ": expected key = value, got '" + line + "'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty()) {
      throw ConfigError("line " + std::to_string(lineno) +
                        ": empty key or value");
    }
    if (key == "dataset") {
      if (value != "synthetic" && value != "mnist" && value != "cifar10") {
        throw ConfigError("unknown dataset '" + value + "'");
      }
      cfg.dataset = value;
    } else if (key == "data_dir") {
      cfg.data_dir = value;
    } else if (key == "train_samples") {
      cfg.train_samples = static_cast<int>(parse_int(value, key));
    } else if (key == "test_samples") {
      cfg.test_samples = static_cast<int>(parse_int(value, key));
    } else if (key == "noise") {
      cfg.noise = parse_double(value, key);
    } else if (key == "arch") {
      parse_arch(value);  // validate eagerly so errors carry line context
      cfg.arch = value;
    } else if (key == "lr_schedule") {
      cfg.lr_schedule.clear();
      for (const std::string& tok : split(value, ',')) {
        cfg.lr_schedule.push_back(parse_double(trim(tok), key));
      }
    } else if (key == "momentum") {
      cfg.momentum = parse_double(value, key);
    } else if (key == "weight_decay") {
      cfg.weight_decay = parse_double(value, key);
    } else if (key == "patience") {
      cfg.patience = static_cast<int>(parse_int(value, key));
    } else if (key == "batch_size") {
      cfg.batch_size = static_cast<int>(parse_int(value, key));
    } else if (key == "max_epochs") {
      cfg.max_epochs = static_cast<int>(parse_int(value, key));
    } else if (key == "init_std") {
      cfg.init_std = parse_double(value, key);
    } else if (key == "val_fraction") {
      cfg.val_fraction = parse_double(value, key);
      if (cfg.val_fraction <= 0.0 || cfg.val_fraction >= 0.5) {
        throw ConfigError("val_fraction must lie in (0, 0.5)");
      }
    } else if (key == "seed") {
      cfg.seed = static_cast<std::uint64_t>(parse_int(value, key));
    } else if (key == "bench_iters") {
      cfg.bench_iters = static_cast<int>(parse_int(value, key));
    } else {
      throw ConfigError("unknown config key '" + key + "'");
    }
  }
  if (cfg.train_samples < 8 || cfg.test_samples < 1) {
    throw ConfigError("train_samples/test_samples too small");
  }
  if (cfg.batch_size < 1 || cfg.max_epochs < 1 || cfg.bench_iters < 1) {
    throw ConfigError("batch_size, max_epochs and bench_iters must be >= 1");
  }
  return cfg;
}

RunConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

}  // namespace poolgen
