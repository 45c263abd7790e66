#pragma once

#include "s2bt/error.hpp"
#include "s2bt/random.hpp"
#include "s2bt/keyvalue.hpp"
#include "s2bt/grad/tensor.hpp"
#include "s2bt/grad/ops.hpp"
#include "s2bt/grad/check.hpp"
#include "s2bt/data/sentence.hpp"
#include "s2bt/data/vocab.hpp"
#include "s2bt/data/conll.hpp"
#include "s2bt/data/batching.hpp"
#include "s2bt/data/synthetic.hpp"
#include "s2bt/metrics/metrics.hpp"
#include "s2bt/model/config.hpp"
#include "s2bt/model/layers.hpp"
#include "s2bt/model/network.hpp"
#include "s2bt/model/serialize.hpp"
#include "s2bt/training/optimizer.hpp"
#include "s2bt/training/trainer.hpp"
#include "s2bt/training/gradcheck.hpp"
