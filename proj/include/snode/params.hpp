#pragma once

#include <map>
#include <random>
#include <string>

#include "snode/dual.hpp"
#include "snode/graph.hpp"

namespace snode {

// Named parameter storage. std::map keeps iteration in name order, so
// results never depend on registration order.
using ParamMap = std::map<std::string, Mat>;

// Binds parameters from a store into one graph, one node per name.
struct VarBinder {
  Graph& g;
  const ParamMap& store;
  std::map<std::string, Var> cache;

  using value_type = Var;

  Var operator()(const std::string& name) {
    auto it = cache.find(name);
    if (it != cache.end()) return it->second;
    auto sit = store.find(name);
    if (sit == store.end())
      throw std::invalid_argument("unknown parameter: " + name);
    Var v = g.param(name, sit->second);
    cache.emplace(name, v);
    return v;
  }

  Var constant(const Mat& m) { return g.constant(m); }
  Var lift(Var v) const { return v; }
};

// Same binding, viewed from a forward-mode pass: parameters and injected
// Vars are constants with respect to the tangent direction.
struct DualBinder {
  VarBinder& base;

  using value_type = Dual;

  Dual operator()(const std::string& name) { return {base(name), std::nullopt}; }
  Dual constant(const Mat& m) { return {base.constant(m), std::nullopt}; }
  Dual lift(Var v) const { return {v, std::nullopt}; }
};

}  // namespace snode
