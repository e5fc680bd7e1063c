"""An object-file carrying a label through occlusion.

A car passes behind shade twice. While it is hidden the bottom-up
confidence falls under 0.2, but the track keeps its stable label.

Run: python3 demos/occlusion_continuity.py
"""
from vap import suites
from vap.config import config_from_dict
from vap.core import CategoryCatalog
from vap.pipeline import run

CAT = CategoryCatalog.default()


def main():
    spec = suites.occlusion_scenario(0, frames=80, windows=((30, 35), (55, 60)))
    res = run(config_from_dict({"attention": {"n_saccade": 1}}), [spec])
    fid = None
    print("frame  bottom-up  stable    conf")
    for fr in res.frames:
        if fr.frame_index % 5 and not (28 <= fr.frame_index <= 36 or 53 <= fr.frame_index <= 61):
            continue
        own = [p for p in fr.proposals if p.truth is not None]
        if not own:
            continue
        if fid is None:
            fid = next((q.file_id for q in own if q.file_id is not None), None)
        track = next((t for t in fr.tracks if t.file_id == fid), None)
        stable = "-" if track is None or track.stable_label is None else CAT.names[track.stable_label]
        conf = "" if track is None else f"{track.stable_confidence:.2f}"
        print(f"{fr.frame_index:5d}  {max(q.probs_bu.max() for q in own):9.3f}  {stable:<8}  {conf}")


if __name__ == "__main__":
    main()
