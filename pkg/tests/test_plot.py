import re
import xml.etree.ElementTree as ET

from subtasknav.episodes import ActionKind, Pose
from subtasknav.navigation import OracleNavigator, execute_instruction
from subtasknav.plot import render_svg, subtask_colors
from subtasknav.scene import WorldPoint
from subtasknav.subtask import SubTask

NS = "{http://www.w3.org/2000/svg}"


def test_colors_are_distinct_and_darken():
    cols = subtask_colors(5)
    assert len(set(cols)) == 5
    lum = [sum(int(c[i:i + 2], 16) for i in (1, 3, 5)) for c in cols]
    assert lum == sorted(lum, reverse=True)
    assert subtask_colors(1) and subtask_colors(0) == []


def test_svg_structure(two_room):
    tasks = [SubTask(ActionKind.EXIT, "bedroom"), SubTask(ActionKind.GO_TO, "sofa")]
    traj = execute_instruction(two_room, Pose(WorldPoint(1.125, 2.125), 0.0), tasks, OracleNavigator())
    svg = render_svg(two_room, traj)
    root = ET.fromstring(svg)
    lines = root.findall(f".//{NS}polyline")
    assert [int(p.get("data-subtask")) for p in lines] == [0, 1]
    assert sum(len(p.get("points").split()) for p in lines) == len(traj.steps)
    assert root.find(f".//{NS}circle[@id='start']") is not None
    assert root.find(f".//{NS}rect[@id='stop']") is not None
    assert len(re.findall(r"<text", svg)) == len(two_room.regions) + len(two_room.objects)
    assert svg == render_svg(two_room, traj)
