import io
import json
import os
import tempfile

import numpy as np
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase, TestCase

from ..conf import versions
from ..depthio import RleMask, write_mask
from ..exceptions import InvalidInput
from ..management.commands.budget import parse_payload, parse_size
from ..models import Detection, Instance
from ..pcexport import read_ground_truth, write_ground_truth
from ..scenegraph import parse_graphml
from .test_synth import SPEC, read_tree


class CommandTestMixin:
    '''
    A scratch output root plus helpers to run commands quietly.
    '''
    def setUp(self):
        super().setUp()
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.out = self.tmp.name

    def call(self, name, *args, **options):
        options.setdefault('out', self.out)
        call_command(name, *args, stdout=io.StringIO(), **options)

    def exit_code(self, name, *args, **options):
        with self.assertRaises(CommandError) as cm:
            self.call(name, *args, **options)
        return cm.exception.returncode

    def path(self, *parts):
        return os.path.join(self.out, *parts)

    def read_json(self, *parts):
        with open(self.path(*parts)) as fh:
            return json.load(fh)

    def write_file(self, name, text):
        path = os.path.join(self.tmp.name, name)
        with open(path, 'w') as fh:
            fh.write(text)
        return path


class SyntheticRunMixin(CommandTestMixin):
    '''
    Generate the two-area synthetic building and ingest both stacks.
    '''
    def setUp(self):
        super().setUp()
        spec = dict(SPEC, confidence={'sam3': [0.8, 0.99]})
        self.call('synth', spec=self.write_file('spec.json', json.dumps(spec)),
                  seed=11)
        self.manifest = self.read_json('synth_manifest.json')
        for pipeline, files in self.manifest['detection_files'].items():
            self.call('ingest', *[self.path(f) for f in files],
                      pipeline=pipeline)

    def run_pipeline(self, pipeline='sam3', jobs=1, **options):
        rasters = self.path('rasters')
        reference = self.path('synth_manifest.json')
        self.call('fuse', pipeline=pipeline, jobs=jobs, rasters=rasters,
                  reference=reference)
        self.call('plausibility', pipeline=pipeline)
        self.call('graph', pipeline=pipeline, jobs=jobs)
        self.call('filter', pipeline=pipeline, jobs=jobs)
        self.call('export', pipeline=pipeline, jobs=jobs)
        self.call('eval', pipeline=pipeline, jobs=jobs, gt=self.path('gt'),
                  reference=reference, **options)


class FullRunTest(SyntheticRunMixin, TestCase):

    def test_ingest_accounting(self):
        sam3 = self.read_json('sam3', 'ingest.json')
        self.assertEqual(sam3['stats']['survived'], 6 * 5 + 3)
        self.assertEqual(sam3['stats']['duplicate'], 0)
        cv = self.read_json('cv', 'ingest.json')
        # two visual detectors per fixture view collapse into one
        self.assertEqual(cv['stats']['duplicate'], 6 * 5)
        self.assertEqual(cv['stats']['survived'], 6 * 5 + 5)
        self.assertEqual(cv['ocr_exclusive'], {'exit_sign': 0})
        self.assertEqual(
            Detection.discard_bin.for_pipeline('cv').reasons(),
            {'duplicate': 30},
        )

    def test_every_artifact_is_written(self):
        '''
        Assert that a full run leaves every artifact in place and the
        fused instances match the planted truth.
        '''
        self.call('fuse', pipeline='cv', rasters=self.path('rasters'))
        self.run_pipeline(compare='cv')
        for area in ('area_1', 'area_2'):
            for name in ('instances.json', 'points.f64le',
                         'points_index.json'):
                self.assertTrue(
                    os.path.exists(self.path('sam3', 'instances', area, name))
                )
            for role in ('full', 'firefighter', 'ems'):
                self.assertTrue(os.path.exists(
                    self.path('sam3', 'graph', area, f'{role}.graphml')
                ))
            self.assertTrue(os.path.exists(
                self.path('sam3', 'clouds', area, 'manifest.json')
            ))
        fuse = self.read_json('sam3', 'fuse.json')
        self.assertEqual(fuse['instances'], 7)
        self.assertEqual(
            Instance.objects.for_pipeline('sam3').class_counts(),
            self.manifest['planted'],
        )
        fragmentation = fuse['fragmentation']
        self.assertEqual(fragmentation['before_fusion']['door'], 5.0)
        self.assertEqual(fragmentation['before_fusion']['wall'], 3.0)
        self.assertTrue(
            all(r == 1.0 for r in fragmentation['after_fusion'].values())
        )

        self.assertEqual(self.read_json('sam3', 'plausibility.json')['reasons'], {})

        graph = self.read_json('sam3', 'graph.json')
        self.assertEqual(graph['areas']['area_1']['problems'], [])
        self.assertEqual(
            graph['areas']['area_1']['breakdown'],
            {'Building': 1, 'Floor': 1, 'Surface': 1, 'Instance': 4},
        )
        for role in ('full', 'ems'):
            path = self.path('sam3', 'graph', 'area_1', f'{role}.graphml')
            with open(path, 'rb') as fh:
                attrs = parse_graphml(fh.read()).graph.graph
            self.assertEqual(attrs['schema'], 'insight-graph/1')
            for package, version in versions().items():
                self.assertEqual(attrs[f'version_{package}'], version)
        ems = self.read_json('sam3', 'filter.json')['areas']['area_1']['ems']
        self.assertEqual(ems['breakdown']['Instance'], 1)

        report = self.read_json('sam3', 'eval.json')
        self.assertEqual(report['schema'], 'insight-eval/1')
        self.assertEqual(report['accuracy']['overall'], 1.0)
        self.assertEqual(
            report['coverage']['area_1']['wall']['fraction'], 1.0
        )
        totals = report['complementarity']['total']
        self.assertEqual((totals['both'], totals['a_only'], totals['b_only']),
                         (6, 0, 0))
        self.assertEqual(report['detection_ratio']['wall']['display'], '>1000x')
        self.assertEqual(report['fragmentation']['door'], 1.0)
        # two evaluated areas, so every cap doubles
        caps = report['cap_fragmentation']
        self.assertEqual(caps['aed'], 0.5)
        self.assertAlmostEqual(caps['fire_extinguisher'], 1 / 6)
        self.assertEqual(caps['exit_sign'], 0.1)
        self.assertEqual(caps['fire_alarm_panel'], 0.0)
        self.assertNotIn('door', caps)
        self.assertEqual(
            report['provenance']['config_hash'],
            fuse['provenance']['config_hash'],
        )

    def test_parallel_runs_are_byte_identical(self):
        self.run_pipeline(jobs=1)
        first = {
            'fuse': read_tree(self.path('sam3', 'instances')),
            'clouds': read_tree(self.path('sam3', 'clouds')),
        }
        with open(self.path('sam3', 'fuse.json'), 'rb') as fh:
            first['fuse.json'] = fh.read()
        with open(self.path('sam3', 'eval.json'), 'rb') as fh:
            first['eval.json'] = fh.read()

        self.run_pipeline(jobs=8)
        self.assertEqual(read_tree(self.path('sam3', 'instances')),
                         first['fuse'])
        self.assertEqual(read_tree(self.path('sam3', 'clouds')),
                         first['clouds'])
        for name in ('fuse.json', 'eval.json'):
            with open(self.path('sam3', name), 'rb') as fh:
                self.assertEqual(fh.read(), first[name], name)

    def test_small_merge_distance_keeps_views_apart(self):
        config = self.write_file(
            'tight.json', json.dumps({'fusion': {'d_merge': 0.001}})
        )
        self.call('fuse', config=config, rasters=self.path('rasters'))
        self.assertEqual(self.read_json('sam3', 'fuse.json')['instances'],
                         6 * 5 + 1)

    def test_fully_discarded_area_keeps_its_building(self):
        self.call('fuse', rasters=self.path('rasters'))
        Instance.objects.for_pipeline('sam3').for_area('area_2').delete(
            reason='below_tau'
        )
        self.call('graph')
        graph = self.read_json('sam3', 'graph.json')
        self.assertEqual(sorted(graph['areas']), ['area_1', 'area_2'])
        self.assertEqual(
            graph['areas']['area_2']['breakdown'],
            {'Building': 1, 'Floor': 0, 'Surface': 0, 'Instance': 0},
        )
        self.assertTrue(
            os.path.exists(self.path('sam3', 'graph', 'area_2', 'full.graphml'))
        )

    def test_mask_of_the_wrong_size_is_skipped(self):
        write_mask(
            self.path('rasters', 'area_1', 'area_1_f000_v00.rle'),
            RleMask(4, 4, ()),
        )
        self.call('fuse', rasters=self.path('rasters'))
        area = self.read_json('sam3', 'fuse.json')['areas']['area_1']
        self.assertEqual(len(area['skipped']), 1)
        skipped = area['skipped'][0]
        self.assertEqual(skipped['image_id'], 'area_1_f000_v00')
        self.assertEqual(skipped['reason'], 'dimension_mismatch')
        self.assertEqual(area['observations'], 4 * 5 + 3 - 1)
        self.assertEqual(area['instances'], 5)

    def test_plausibility_is_rerunnable(self):
        self.call('fuse', rasters=self.path('rasters'))
        config = self.write_file(
            'strict.json', json.dumps({'plausibility': {'tau': 0.999}})
        )
        self.call('plausibility', config=config, all_classes=True)
        self.assertEqual(Instance.objects.for_pipeline('sam3').count(), 0)
        strict = self.read_json('sam3', 'plausibility.json')
        self.assertEqual(strict['reasons'], {'below_tau': 7})
        self.assertEqual(
            strict['reduction']['overall'],
            {'raw': 7, 'filtered': 0, 'reduction': 1.0},
        )
        self.call('plausibility')
        self.assertEqual(Instance.objects.for_pipeline('sam3').count(), 7)
        relaxed = self.read_json('sam3', 'plausibility.json')
        self.assertEqual(relaxed['reasons'], {})
        # only the capped aed, exit_sign and fire_extinguisher are considered
        self.assertEqual(relaxed['reduction']['overall']['raw'], 3)
        self.assertEqual(relaxed['reduction']['overall']['filtered'], 3)

    def test_frame_mismatch_is_invalid_input(self):
        self.run_pipeline()
        moved = os.path.join(self.tmp.name, 'gt_site')
        for area in ('area_1', 'area_2'):
            gt = read_ground_truth(self.path('gt', area))
            write_ground_truth(
                os.path.join(moved, area), area, gt.coord, list(gt.labels),
                frame='site',
            )
        self.assertEqual(self.exit_code('eval', gt=moved), 1)


class ExitCodeTest(CommandTestMixin, TestCase):

    def test_missing_raster_dir(self):
        self.assertEqual(
            self.exit_code('fuse', rasters=self.path('nowhere')), 2
        )

    def test_missing_detection_file(self):
        self.assertEqual(
            self.exit_code('ingest', self.path('absent.jsonl')), 2
        )

    def test_invalid_config(self):
        config = self.write_file('bad.json', json.dumps({'fuse': {}}))
        self.assertEqual(self.exit_code('graph', config=config), 1)

    def test_malformed_detection_line(self):
        path = self.write_file('det.jsonl', '{"schema": "insight-det/1"\n')
        self.assertEqual(self.exit_code('ingest', path), 1)

    def test_budget_without_graphs(self):
        self.assertEqual(self.exit_code('budget'), 2)

    def test_export_before_fuse(self):
        self.assertEqual(self.exit_code('export'), 2)


class IngestCommandTest(CommandTestMixin, TestCase):

    def test_one_duplicate_pair(self):
        '''
        Assert that of two overlapping detections the stronger one is
        stored and the other lands in the discard bin as a duplicate.
        '''
        line = {
            'schema': 'insight-det/1', 'image_id': 'img_0',
            'area_id': 'area_1', 'class': 'door', 'box2d': [0, 0, 10, 20],
            'confidence': 0.6, 'source': 'sam3',
        }
        stronger = dict(line, confidence=0.9, box2d=[1, 0, 10, 20])
        path = self.write_file(
            'det.jsonl', json.dumps(line) + '\n' + json.dumps(stronger) + '\n'
        )
        self.call('ingest', path)
        self.assertEqual(
            list(Detection.objects.values_list('record_index', 'confidence')),
            [(1, 0.9)],
        )
        discarded = Detection.discard_bin.get()
        self.assertEqual(discarded.record_index, 0)
        self.assertEqual(discarded.discard_reason, 'duplicate')
        stats = self.read_json('sam3', 'ingest.json')['stats']
        self.assertEqual((stats['raw'], stats['survived']), (2, 1))

    def test_no_inputs_store_nothing(self):
        self.call('ingest')
        self.assertEqual(Detection.all_objects.count(), 0)
        stats = self.read_json('sam3', 'ingest.json')['stats']
        self.assertEqual((stats['raw'], stats['survived']), (0, 0))

    def test_rerun_replaces_rows(self):
        line = json.dumps({
            'schema': 'insight-det/1', 'image_id': 'img_0',
            'area_id': 'area_1', 'class': 'aed', 'box2d': [0, 0, 5, 5],
            'confidence': 0.5, 'source': 'sam3',
        })
        path = self.write_file('det.jsonl', line + '\n')
        self.call('ingest', path)
        with open(self.path('sam3', 'ingest.json'), 'rb') as fh:
            first = fh.read()
        self.call('ingest', path)
        self.assertEqual(Detection.all_objects.count(), 1)
        with open(self.path('sam3', 'ingest.json'), 'rb') as fh:
            self.assertEqual(fh.read(), first)


class BudgetCommandTest(CommandTestMixin, TestCase):

    def test_payload_grid(self):
        self.call('budget', payload=['full=4.2MB', 'firefighter=1.8MB'],
                  source='86.1GB')
        report = self.read_json('sam3', 'budget.json')
        self.assertEqual(
            [c['display'] for c in report['rows'][0]['cells']],
            ['33.6 s', '6.7 s', '1.3 s'],
        )
        self.assertFalse(report['rows'][0]['cells'][0]['fits'])
        self.assertTrue(report['rows'][1]['cells'][0]['fits'])
        self.assertAlmostEqual(
            report['rows'][0]['compression_ratio'], 86.1e9 / 4.2e6
        )


class ParseSizeTest(SimpleTestCase):

    def test_sizes(self):
        self.assertEqual(parse_size('4.2MB'), 4.2 * 10 ** 6)
        self.assertEqual(parse_size('86.1 GB'), 86.1 * 10 ** 9)
        self.assertEqual(parse_size('512'), 512.0)
        self.assertEqual(parse_size('3kB'), 3000.0)
        with self.assertRaises(InvalidInput):
            parse_size('lots')

    def test_payloads(self):
        self.assertEqual(parse_payload('ems=0.8MB'), ('ems', 0.8 * 10 ** 6))
        with self.assertRaises(InvalidInput):
            parse_payload('0.8MB')
        np.testing.assert_allclose(parse_payload('x=1GB')[1], 1e9)
