"""Scene context resolving confusable categories.

Cars and boats (and dogs and cows) are injected as look-alikes, so the
bottom-up classifier alone splits its votes between them. A context tallied
from a separate training suite knows that boats live in harbors and cows
on farms, and the fused decision picks the right member of each pair.

Run: python3 demos/context_fusion.py  (about a minute)
"""
from vap import suites
from vap.config import config_from_dict
from vap.core import CategoryCatalog
from vap.evaluation import category_scores, error_rate
from vap.pipeline import run
from vap.scenario import bootstrap_context

CAT = CategoryCatalog.default()
BOTTOM_UP_ONLY = {"scene_pathway": False, "gist_pathway": False, "object_files": False, "reinforcement": False}


def main():
    suite = suites.ambiguity_suite(0)
    context = bootstrap_context(suites.ambiguity_bootstrap_suite(), weight=10)
    base = {"attention": {"n_saccade": 1}}
    runs = {
        "bottom-up only": run(config_from_dict({**base, "pipeline": BOTTOM_UP_ONLY}), suite, context=context),
        "full pipeline": run(config_from_dict(base), suite, context=context),
    }
    watched = [n for pair in suites.AMBIGUITY_PAIRS for n in pair]
    print(f"{len(suite)} clips over scenes {', '.join(suites.AMBIGUITY_SCENES)}")
    print(f"{'configuration':<16} {'error':>6}  " + "  ".join(f"{n:>6}" for n in watched))
    for label, res in runs.items():
        f1 = {CAT.names[s.category]: s.f1 for s in category_scores(res.instances, len(CAT))}
        print(f"{label:<16} {error_rate(res.instances):6.3f}  " + "  ".join(f"{f1.get(n, 0.0):6.2f}" for n in watched))


if __name__ == "__main__":
    main()
