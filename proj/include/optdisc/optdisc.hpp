#pragma once

#include "optdisc/error.hpp"
#include "optdisc/random.hpp"
#include "optdisc/grid.hpp"
#include "optdisc/mdp.hpp"
#include "optdisc/options.hpp"
#include "optdisc/hallway.hpp"
#include "optdisc/executor.hpp"
#include "optdisc/option_model.hpp"
#include "optdisc/oracle.hpp"
#include "optdisc/planner.hpp"
#include "optdisc/learner.hpp"
#include "optdisc/fixtures.hpp"
#include "optdisc/harness.hpp"
