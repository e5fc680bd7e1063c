"""Online refinement on an unfamiliar viewpoint.

Bicycles seen from above look increasingly like cars. Object-files that
settled on "bicycle" early harvest the confusing samples, and idle-time
refinement retrains the classifier on them. The cumulative error falls
below that of the same run with refinement switched off.

Run: python3 demos/viewpoint_learning.py  (about a minute)
"""
from vap import suites
from vap.config import config_from_dict
from vap.evaluation import cumulative_error
from vap.pipeline import run
from vap.scenario import bootstrap_context


def main():
    suite = suites.viewpoint_suite(0)
    context = bootstrap_context(suites.street_bootstrap_suite(), weight=3)
    base = {"attention": {"n_saccade": 1}, "classifiers": {"bottom_up": "feature_stub"}}
    learn = run(config_from_dict(base), suite, context=context)
    frozen = run(config_from_dict({**base, "pipeline": {"reinforcement": False}}), suite, context=context)
    a, b = cumulative_error(learn.instances), cumulative_error(frozen.instances)
    print("instance  with refinement  without")
    for k in range(0, len(a), max(len(a) // 12, 1)):
        print(f"{k:8d}  {a[k]:15.3f}  {b[k]:7.3f}")
    print(f"{'final':>8}  {a[-1]:15.3f}  {b[-1]:7.3f}")
    for clip, e in learn.refinements:
        verdict = "kept" if e.accepted else "rolled back"
        print(f"clip {clip} frame {e.frame_index}: {e.buffer_size} samples, probe "
              f"{e.pre_probe_accuracy:.2f} -> {e.post_probe_accuracy:.2f}, {verdict}")


if __name__ == "__main__":
    main()
