#pragma once

#include "clnn/adam.hpp"
#include "clnn/checkpoint.hpp"
#include "clnn/cluster.hpp"
#include "clnn/corpus.hpp"
#include "clnn/decoder.hpp"
#include "clnn/eval.hpp"
#include "clnn/grad_check.hpp"
#include "clnn/model.hpp"
#include "clnn/ops.hpp"
#include "clnn/train.hpp"
