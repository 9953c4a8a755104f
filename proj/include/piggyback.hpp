#pragma once

#include "piggyback/engine.hpp"
#include "piggyback/errors.hpp"
#include "piggyback/linalg.hpp"
#include "piggyback/metrics.hpp"
#include "piggyback/model.hpp"
#include "piggyback/oracle.hpp"
#include "piggyback/random.hpp"
#include "piggyback/sampler.hpp"
#include "piggyback/theory.hpp"
