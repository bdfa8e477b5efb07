#!/usr/bin/env python3
"""Writes the shipped hand descriptions to data/hands/.

Each file records `rest_fingertips`, the fingertip positions at the rest pose
evaluated by the small forward-kinematics routine below (numpy only), so the
C++ kinematics can be checked against an independent evaluation.
"""

import json
import math
import pathlib

import numpy as np

OUT = pathlib.Path(__file__).resolve().parent.parent / "data" / "hands"


def rotvec_to_matrix(w):
    w = np.asarray(w, dtype=float)
    th = np.linalg.norm(w)
    if th < 1e-15:
        return np.eye(3)
    k = w / th
    kx = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
    return np.eye(3) + math.sin(th) * kx + (1 - math.cos(th)) * kx @ kx


def transform(origin):
    t = np.eye(4)
    t[:3, :3] = rotvec_to_matrix(origin[3:])
    t[:3, 3] = origin[:3]
    return t


def fk(hand, base, joint_values):
    poses = {hand["links"][0]: transform(base)}
    k = 0
    pending = list(hand["joints"])
    values = {}
    for j in hand["joints"]:
        if j["type"] != "fixed":
            values[j["name"]] = joint_values[k]
            k += 1
    while pending:
        for j in list(pending):
            if j["parent"] not in poses:
                continue
            t = poses[j["parent"]] @ transform(j["origin"])
            if j["type"] == "revolute":
                m = np.eye(4)
                m[:3, :3] = rotvec_to_matrix(np.asarray(j["axis"]) * values[j["name"]])
                t = t @ m
            elif j["type"] == "prismatic":
                m = np.eye(4)
                m[:3, 3] = np.asarray(j["axis"]) * values[j["name"]]
                t = t @ m
            poses[j["child"]] = t
            pending.remove(j)
    return poses


def tips(hand):
    rest = hand["rest_pose"]
    poses = fk(hand, rest["base"], rest["joints"])
    out = []
    for f in hand["fingertips"]:
        p = poses[f["link"]] @ np.append(np.asarray(f["offset"]), 1.0)
        out.append([float(x) for x in p[:3]])
    return out


def radial_hand(name, n_fingers, palm_radius, lengths, limits, rest_joints, tip_radius):
    links = ["palm"]
    joints = []
    tips_ = []
    spheres = [{"link": "palm", "center": [0.0, 0.0, -0.015], "radius": palm_radius * 0.75}]
    for i in range(n_fingers):
        theta = 2 * math.pi * i / n_fingers
        prev = "palm"
        for s, length in enumerate(lengths):
            link = f"f{i}_l{s}"
            links.append(link)
            if s == 0:
                origin = [palm_radius * math.cos(theta), palm_radius * math.sin(theta), 0.0, 0.0, 0.0, theta]
            else:
                origin = [0.0, 0.0, lengths[s - 1], 0.0, 0.0, 0.0]
            joints.append({
                "name": f"f{i}_j{s}",
                "type": "revolute",
                "parent": prev,
                "child": link,
                "origin": origin,
                "axis": [0.0, -1.0, 0.0],
                "limits": list(limits[s]),
                "close": 1,
            })
            if s < len(lengths) - 1:
                spheres.append({"link": link, "center": [0.0, 0.0, length / 2], "radius": 0.011})
            prev = link
        tips_.append({"link": prev, "offset": [0.0, 0.0, lengths[-1]]})
        spheres.append({"link": prev, "center": [0.0, 0.0, lengths[-1] - 1.5 * tip_radius], "radius": tip_radius})
    hand = {
        "name": name,
        "links": links,
        "joints": joints,
        "fingertips": tips_,
        "collision_spheres": spheres,
        "rest_pose": {"base": [0.0] * 6, "joints": rest_joints * n_fingers},
    }
    hand["rest_fingertips"] = tips(hand)
    return hand


def jaw_gripper():
    hand = {
        "name": "jaw_gripper",
        "links": ["palm", "left_jaw", "right_jaw"],
        "joints": [
            {"name": "left", "type": "prismatic", "parent": "palm", "child": "left_jaw",
             "origin": [0, 0, 0, 0, 0, 0], "axis": [1.0, 0.0, 0.0], "limits": [0.012, 0.09], "close": -1},
            {"name": "right", "type": "prismatic", "parent": "palm", "child": "right_jaw",
             "origin": [0, 0, 0, 0, 0, 0], "axis": [-1.0, 0.0, 0.0], "limits": [0.012, 0.09], "close": -1},
        ],
        "fingertips": [
            {"link": "left_jaw", "offset": [0.0, 0.0, 0.08]},
            {"link": "right_jaw", "offset": [0.0, 0.0, 0.08]},
        ],
        "collision_spheres": [
            {"link": "palm", "center": [0.0, 0.0, -0.015], "radius": 0.03},
            {"link": "left_jaw", "center": [0.0, 0.0, 0.035], "radius": 0.008},
            {"link": "left_jaw", "center": [0.0, 0.0, 0.068], "radius": 0.008},
            {"link": "right_jaw", "center": [0.0, 0.0, 0.035], "radius": 0.008},
            {"link": "right_jaw", "center": [0.0, 0.0, 0.068], "radius": 0.008},
        ],
        "rest_pose": {"base": [0.0] * 6, "joints": [0.05, 0.05]},
    }
    hand["rest_fingertips"] = tips(hand)
    return hand


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    hands = {
        "jaw_gripper.json": jaw_gripper(),
        "three_finger.json": radial_hand("three_finger", 3, 0.04, [0.05, 0.04],
                                         [(-0.5, 1.4), (0.0, 1.6)], [0.0, 0.25], 0.01),
        "four_finger.json": radial_hand("four_finger", 4, 0.045, [0.045, 0.035, 0.025],
                                        [(-0.4, 1.4), (0.0, 1.6), (0.0, 1.4)], [0.0, 0.15, 0.15], 0.009),
    }
    for fname, hand in hands.items():
        (OUT / fname).write_text(json.dumps(hand, indent=2) + "\n")


if __name__ == "__main__":
    main()
