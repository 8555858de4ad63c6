#pragma once
#include "lclab/model.hpp"
namespace lclab::oracle {
std::vector<std::vector<double>> reference_forward(const Checkpoint& ckpt, const TokenSequence& tokens);
}
