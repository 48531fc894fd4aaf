# Copyright 2026 The raydet Authors.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
# http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Test the command line driver."""

import logging
import math
import os
from typing import Dict, List

import mock
import numpy as np

import raydet.cli as cli
import raydet.guard as guard
import raydet.tensor_io as tensor_io
import raydet.test_utils as test_utils

SMALL_CONFIG = {
    'num-cars': 3,
    'num-pedestrians': 2,
    'bev-resolution': 64,
}


def read_tree(path: str) -> Dict[str, bytes]:
    """Bytes of every file under `path`, by relative name."""
    tree = {}
    for root, _, files in os.walk(path):
        for name in files:
            full = os.path.join(root, name)
            with open(full, 'rb') as f:
                tree[os.path.relpath(full, path)] = f.read()
    return tree


class TestCli(test_utils.RayTestCase):
    """Subcommands, artifacts and exit codes."""

    def setUp(self) -> None:
        """Set up a work directory with a small config."""
        super().setUp()
        self.work = self.make_tempdir()
        self.config = os.path.join(self.work, 'config.json')
        tensor_io.write_json(self.config, SMALL_CONFIG)

    def out(self, name: str) -> str:
        """Output directory `name` under the work directory."""
        return os.path.join(self.work, name)

    def run_cli(self, *argv: str) -> guard.StageOutcome:
        """Run raydet with the small config."""
        return cli.run(list(argv[:1]) + ['--config', self.config]
                       + list(argv[1:]))

    def assertOk(self, outcome: guard.StageOutcome) -> None:
        """Assert a stage succeeded."""
        self.assertEqual(outcome.exit_code, 0, outcome.message)

    def gen_scene(self, name: str = 'scene') -> str:
        """Generate the seed 42 scene; returns scene.json."""
        self.assertOk(
            self.run_cli('gen-scene', '--seed', '42', '--out', self.out(name)))
        return os.path.join(self.out(name), 'scene.json')

    def write_predictions(self) -> str:
        """Two predictions near the first two scene objects."""
        scene = tensor_io.read_json(os.path.join(self.out('scene'),
                                                 'scene.json'))
        records = []
        for obj in scene['objects'][:2]:
            x, y, z = obj['center']
            records.append(test_utils.make_prediction(
                math.atan2(y, x) % (2 * math.pi),
                math.hypot(x, y) + 0.5,
                {obj['category']: 0.9},
                z=z, yaw=obj['yaw']).to_dict())
        return test_utils.write_records(
            self.work, 'predictions.jsonl', records)

    def test_init_queries_default(self) -> None:
        """Test the default config writes 900 queries."""
        self.assertOk(cli.run(['init-queries', '--out', self.out('q')]))
        records = tensor_io.read_jsonl(
            os.path.join(self.out('q'), 'queries.jsonl'))
        self.assertEqual(len(records), 900)
        self.assertEqual(
            sum(r['origin'] == 'foreground' for r in records), 90)

    def test_pipeline_deterministic(self) -> None:
        """Test every subcommand twice gives byte-identical artifacts."""
        scene = self.gen_scene('scene')
        self.gen_scene('scene2')
        self.assertEqual(
            read_tree(self.out('scene')), read_tree(self.out('scene2')))
        predictions = self.write_predictions()
        runs: List[List[str]] = [
            ['init-queries', '--scene', scene],
            ['lift-splat', '--scene', scene],
            ['lift-splat', '--scene', scene, '--format', 'json'],
            ['assign', '--predictions', predictions, '--scene', scene],
            ['dispersion', '--scene', scene],
        ]
        for i, argv in enumerate(runs):
            trees = []
            for rerun in range(2):
                out = self.out(f'{argv[0]}-{i}-{rerun}')
                self.assertOk(self.run_cli(*argv, '--out', out))
                trees.append(read_tree(out))
            self.assertTrue(trees[0])
            self.assertEqual(trees[0], trees[1], argv)
        queries = os.path.join(self.out('init-queries-0-0'), 'queries.jsonl')
        bev = os.path.join(self.out('lift-splat-1-0'), 'bev.rtn')
        for argv in (
            ['sample', '--scene', scene, '--queries', queries, '--bev', bev],
            ['eval', '--predictions', predictions, '--scene', scene,
             '--queries', queries],
        ):
            trees = []
            for rerun in range(2):
                out = self.out(f'{argv[0]}-{rerun}')
                self.assertOk(self.run_cli(*argv, '--out', out))
                trees.append(read_tree(out))
            self.assertEqual(trees[0], trees[1], argv)

    def test_sample_artifacts(self) -> None:
        """Test sample writes both branches, their fusion and the points."""
        scene = self.gen_scene()
        self.assertOk(self.run_cli(
            'init-queries', '--scene', scene, '--out', self.out('q')))
        self.assertOk(self.run_cli(
            'lift-splat', '--scene', scene, '--format', 'json',
            '--out', self.out('bev')))
        self.assertOk(self.run_cli(
            'sample', '--scene', scene,
            '--queries', os.path.join(self.out('q'), 'queries.jsonl'),
            '--bev', os.path.join(self.out('bev'), 'bev.json'),
            '--format', 'json', '--out', self.out('s')))
        fused = tensor_io.read_array(os.path.join(self.out('s'), 'fused.json'))
        self.assertEqual(fused.shape, (900, 5))
        points = tensor_io.read_jsonl(
            os.path.join(self.out('s'), 'sampling_points.jsonl'))
        # K_bev = 5 and K_img = 3 ray points, P = 4 offsets, T = 1
        self.assertEqual(len(points), 900 * (5 + 3) * 4)
        self.assertEqual(points[0]['branch'], 'bev')
        self.assertEqual(points[-1]['branch'], 'image')

    def test_assign_fixture(self) -> None:
        """Test assign on two predictions and two swapped objects."""
        gts = [
            test_utils.ground_truth_at(0.0, 20.0, 'pedestrian'),
            test_utils.ground_truth_at(10.0, 0.0),
        ]
        preds = [
            test_utils.make_prediction(
                0.0, 10.0, {'car': 0.8, 'pedestrian': 0.1}),
            test_utils.make_prediction(
                math.pi / 2, 21.0, {'car': 0.2, 'pedestrian': 0.7},
                w=0.7, l=0.7),
        ]
        gt_path = test_utils.write_records(
            self.work, 'gt.jsonl', [gt.to_dict() for gt in gts])
        pred_path = test_utils.write_records(
            self.work, 'preds.jsonl', [p.to_dict() for p in preds])
        self.assertOk(self.run_cli(
            'assign', '--predictions', pred_path, '--ground-truth', gt_path,
            '--out', self.out('a')))
        assignment = tensor_io.read_json(
            os.path.join(self.out('a'), 'assignment.json'))
        self.assertEqual(assignment['pairs'], [[0, 1], [1, 0]])
        self.assertEqual(assignment['unmatched_pred'], [])
        self.assertEqual(assignment['unmatched_gt'], [])

    def test_eval_report(self) -> None:
        """Test eval writes metrics and a report."""
        scene = self.gen_scene()
        predictions = self.write_predictions()
        self.assertOk(self.run_cli(
            'eval', '--predictions', predictions, '--scene', scene,
            '--out', self.out('e')))
        metrics = tensor_io.read_json(
            os.path.join(self.out('e'), 'metrics.json'))
        self.assertEqual(metrics['num_matches'], 2)
        self.assertAlmostEqual(metrics['ate'], 0.5, places=6)
        self.assertNotIn('foreground_recall', metrics)
        with open(os.path.join(self.out('e'), 'eval_report.txt')) as f:
            self.assertIn('Detections: 2', f.read())

    def test_degenerate_records(self) -> None:
        """Test empty boxes and missing probabilities exit 2."""
        scene = self.gen_scene()
        gt = test_utils.ground_truth_at(10.0, 0.0).to_dict()
        gt['size'] = [0.0, 4.5, 1.7]
        gt_path = test_utils.write_records(self.work, 'gt.jsonl', [gt])
        pred = test_utils.make_prediction(0.0, 10.0, {'car': 0.9}).to_dict()
        good = test_utils.write_records(self.work, 'good.jsonl', [pred])
        outcome = self.run_cli(
            'assign', '--predictions', good, '--ground-truth', gt_path,
            '--out', self.out('a'))
        self.assertEqual(outcome.exit_code, 2)
        self.assertIn('dims > 0', outcome.message)
        for field, value in (('w', -1.0), ('probs', {})):
            bad = dict(pred, **{field: value})
            path = test_utils.write_records(self.work, 'bad.jsonl', [bad])
            for argv in (
                ['assign', '--predictions', path, '--scene', scene],
                ['eval', '--predictions', path, '--scene', scene],
            ):
                outcome = self.run_cli(*argv, '--out', self.out('b'))
                self.assertEqual(outcome.exit_code, 2, argv)

    def test_eval_ignores_filler_rays(self) -> None:
        """Test filler rays earn no foreground recall."""
        scene = self.gen_scene()
        predictions = self.write_predictions()
        self.assertOk(self.run_cli('init-queries', '--out', self.out('q')))
        self.assertOk(self.run_cli(
            'eval', '--predictions', predictions, '--scene', scene,
            '--queries', os.path.join(self.out('q'), 'queries.jsonl'),
            '--out', self.out('e')))
        metrics = tensor_io.read_json(
            os.path.join(self.out('e'), 'metrics.json'))
        self.assertEqual(metrics['foreground_recall'], 0.0)

    def test_usage_errors(self) -> None:
        """Test bad flags and missing inputs exit 1."""
        for argv in (
            [],
            ['bogus'],
            ['gen-scene', '--seed', 'many'],
            ['gen-scene', '--seed', '-1', '--out', self.out('x')],
            ['lift-splat', '--out', self.out('x')],
            ['lift-splat', '--scene', self.out('none.json')],
            ['sample', '--format', 'xml'],
            ['assign', '--predictions', self.config],
            ['init-queries', '--config', self.out('none.json')],
        ):
            self.assertEqual(cli.run(argv).exit_code, 1, argv)

    def test_malformed_inputs(self) -> None:
        """Test unparsable or mis-shaped inputs exit 2."""
        bad = os.path.join(self.work, 'bad.json')
        with open(bad, 'w') as f:
            f.write('{')
        self.assertEqual(
            cli.run(['init-queries', '--config', bad]).exit_code, 2)
        tensor_io.write_json(bad, {'num-rays': 'many'})
        self.assertEqual(
            cli.run(['init-queries', '--config', bad]).exit_code, 2)
        scene = self.gen_scene()
        records = test_utils.write_records(
            self.work, 'queries.jsonl', [{'theta': 0.0}])
        self.assertEqual(self.run_cli(
            'sample', '--scene', scene, '--queries', records,
            '--bev', scene, '--out', self.out('x')).exit_code, 2)
        self.assertOk(self.run_cli(
            'init-queries', '--scene', scene, '--out', self.out('q')))
        bev = os.path.join(self.work, 'bev.rtn')
        tensor_io.write_array(bev, np.zeros((1, 4, 4, 5)))
        outcome = self.run_cli(
            'sample', '--scene', scene,
            '--queries', os.path.join(self.out('q'), 'queries.jsonl'),
            '--bev', bev, '--out', self.out('x'))
        self.assertEqual(outcome.exit_code, 2)
        self.assertIn('BEV stack', outcome.message)

    def test_invariant_violation(self) -> None:
        """Test a config breaking an invariant exits 3 naming it."""
        tensor_io.write_json(self.config, {'num-rays': 0})
        outcome = self.run_cli('init-queries', '--out', self.out('x'))
        self.assertEqual(outcome.exit_code, 3)
        self.assertIn('N_r >= 1', outcome.message)

    def test_main_logs_failure(self) -> None:
        """Test main returns the exit code and logs the failure."""
        with mock.patch.object(cli, 'setup_logging'):
            with self.assertLogs('raydet.cli', level='ERROR'):
                self.assertEqual(cli.main(['bogus']), 1)
            self.assertEqual(
                cli.main(['init-queries', '--out', self.out('m')]), 0)


class TestLogging(test_utils.RayTestCase):
    """Log level from the environment."""

    def setUp(self) -> None:
        """Set up a patched basicConfig."""
        super().setUp()
        self.basic_config = self.patch_obj(logging, 'basicConfig')

    def level(self) -> int:
        """Level passed to basicConfig."""
        return self.basic_config.call_args[1]['level']

    def test_default(self) -> None:
        """Test WARNING without the variable."""
        with mock.patch.dict(os.environ, {}, clear=True):
            cli.setup_logging()
        self.assertEqual(self.level(), logging.WARNING)

    def test_from_environment(self) -> None:
        """Test the variable sets the level, case-insensitively."""
        with mock.patch.dict(os.environ, {cli.LOG_ENV: 'debug'}):
            cli.setup_logging()
        self.assertEqual(self.level(), logging.DEBUG)

    def test_unknown_level(self) -> None:
        """Test an unknown level falls back to WARNING."""
        cli.setup_logging('loud')
        self.assertEqual(self.level(), logging.WARNING)
