"""
Test Module for the DeskBBF network package
"""

import unittest

import numpy as np

from src.autodiff import ops
from src.autodiff.gradcheck import check_gradients
from src.autodiff.tensor import ShapeError, precision
from src.network.architecture import ArchitectureSpec, count_conv_layers, describe, init_parameters
from src.network.model import BBFNetwork, select_action
from src.network.resets import (
    KEEP, PERTURB, RESET, LayerPolicy, create_bundle, draw_template, ema_update, hard_reset,
    parameter_distance, shrink_and_perturb,
)


def tiny_spec(**overrides):
    """A network small enough for finite differences."""
    values = dict(input_channels=4, input_height=6, input_width=6, num_actions=3, width_scale=1,
                  base_channels=(2, 3, 3), hidden_dim=8, latent_dim=6, num_atoms=5, spr_horizon=2)
    values.update(overrides)
    return ArchitectureSpec(**values)


class TestArchitecture(unittest.TestCase):
    """Shapes, initialisation and the parameter table."""

    def test_default_encoder_shape(self):
        spec = ArchitectureSpec()
        self.assertEqual(spec.stage_channels, (64, 128, 128))
        self.assertEqual(spec.stage_spatial(), [(5, 5), (3, 3), (2, 2)])
        self.assertEqual(spec.latent_shape, (128, 2, 2))
        self.assertEqual(spec.feature_dim, 512)

    def test_describe_counts_fifteen_encoder_convolutions(self):
        summary = describe(ArchitectureSpec(width_scale=1))
        self.assertEqual(summary['conv_layers'], 15)
        self.assertEqual(summary['total'], sum(count for _, _, count in summary['rows']))
        self.assertEqual(set(summary['groups']), {'encoder', 'head', 'transition', 'projection', 'prediction'})
        self.assertIn('encoder convolution layers: 15', summary['text'])

    def test_width_scale_grows_encoder(self):
        small = describe(tiny_spec(width_scale=1))['groups']['encoder']
        large = describe(tiny_spec(width_scale=2))['groups']['encoder']
        self.assertGreater(large, 3 * small)

    def test_initialisation_is_seeded(self):
        a = init_parameters(tiny_spec(), seed=3)
        b = init_parameters(tiny_spec(), seed=3)
        c = init_parameters(tiny_spec(), seed=4)
        self.assertEqual(parameter_distance(a, b), 0.0)
        self.assertGreater(parameter_distance(a, c), 0.0)

    def test_residual_output_convolutions_start_at_zero(self):
        params = init_parameters(tiny_spec(), seed=0)
        for name, tensor in params.items():
            if '.conv1.weight' in name and name.startswith('encoder.'):
                self.assertEqual(float(np.abs(tensor.data).sum()), 0.0, name)

    def test_non_dueling_head_names(self):
        params = init_parameters(tiny_spec(dueling=False, use_spr=False), seed=0)
        self.assertIn('head.q.out.weight', params)
        self.assertNotIn('head.value.out.weight', params)
        self.assertNotIn('projection.weight', params)
        self.assertEqual(count_conv_layers(params), 15)

    def test_invalid_spec(self):
        with self.assertRaises(ValueError):
            ArchitectureSpec(width_scale=0)
        with self.assertRaises(ValueError):
            ArchitectureSpec(v_min=1.0, v_max=1.0)


class TestForwardPasses(unittest.TestCase):
    """Head outputs and the latent rollout."""

    def setUp(self):
        self.spec = tiny_spec()
        self.network = BBFNetwork(self.spec)
        self.params = init_parameters(self.spec, seed=1)
        self.observations = np.random.default_rng(0).random((2, 4, 6, 6))

    def test_distributions_are_normalised(self):
        probs = self.network.q_distribution(self.params, self.observations).data
        self.assertEqual(probs.shape, (2, 3, 5))
        np.testing.assert_allclose(probs.sum(axis=-1), np.ones((2, 3)), atol=1e-5)

    def test_q_values_are_expected_atoms(self):
        probs = self.network.q_distribution(self.params, self.observations).data
        q = self.network.q_values(self.params, self.observations)
        np.testing.assert_allclose(q, probs @ self.spec.atoms(), atol=1e-5)

    def test_rejects_wrong_observation_shape(self):
        with self.assertRaises(ShapeError):
            self.network.q_logits(self.params, np.zeros((2, 3, 6, 6)))

    def test_rollout_shapes(self):
        latent = self.network.encode(self.params, self.observations)
        predictions = self.network.spr_rollout(self.params, latent, np.array([[0, 1], [2, 2]]))
        self.assertEqual(len(predictions), 2)
        for prediction in predictions:
            self.assertEqual(prediction.shape, (2, 6))

    def test_rollout_rejects_wrong_horizon(self):
        latent = self.network.encode(self.params, self.observations)
        with self.assertRaises(ValueError):
            self.network.spr_rollout(self.params, latent, np.zeros((2, 3), dtype=int))

    def test_rollout_requires_spr_heads(self):
        spec = tiny_spec(use_spr=False)
        network = BBFNetwork(spec)
        params = init_parameters(spec, seed=0)
        latent = network.encode(params, self.observations)
        with self.assertRaises(ValueError):
            network.spr_rollout(params, latent, np.zeros((2, 2), dtype=int))

    def test_shared_advantage_shift_leaves_distributions_unchanged(self):
        with precision('float64'):
            params = init_parameters(self.spec, seed=1)
            before = self.network.q_distribution(params, self.observations).data
            params['head.advantage.out.bias'].data += 3.7
            after = self.network.q_distribution(params, self.observations).data
        np.testing.assert_allclose(after, before, atol=1e-12)

    def test_expected_values_stay_inside_support(self):
        for scale in (1.0, 50.0, 1000.0):
            params = init_parameters(self.spec, seed=4)
            for name in ('head.value.out.weight', 'head.advantage.out.weight'):
                params[name].data *= scale
            observations = np.random.default_rng(int(scale)).random((8, 4, 6, 6))
            q = self.network.q_values(params, observations)
            self.assertTrue(np.all(q >= self.spec.v_min - 1e-4), scale)
            self.assertTrue(np.all(q <= self.spec.v_max + 1e-4), scale)

    def test_zeroed_transition_residual_is_identity(self):
        params = init_parameters(self.spec, seed=1)
        params['transition.conv1.weight'].data[...] = 0.0
        params['transition.conv1.bias'].data[...] = 0.0
        latent = self.network.encode(params, self.observations)
        stepped = self.network.transition(params, latent, np.array([0, 2]))
        np.testing.assert_array_equal(stepped.data, latent.data)
        start = self.network.predict(params, self.network.project(params, latent)).data
        for prediction in self.network.spr_rollout(params, latent, np.array([[0, 1], [2, 2]])):
            np.testing.assert_allclose(prediction.data, start, atol=1e-6)

    def test_first_action_changes_later_predictions(self):
        latent = self.network.encode(self.params, self.observations)
        first = self.network.spr_rollout(self.params, latent, np.array([[0, 1], [0, 1]]))
        second = self.network.spr_rollout(self.params, latent, np.array([[2, 1], [1, 1]]))
        for row in range(2):
            self.assertGreater(np.abs(first[1].data[row] - second[1].data[row]).max(), 1e-6)

    def test_head_and_transition_gradients(self):
        with precision('float64'):
            params = init_parameters(self.spec, seed=2)
            observations = np.random.default_rng(1).random((2, 4, 6, 6))
            actions = np.array([1, 2])
            weights = np.random.default_rng(2).normal(size=(2, 6))

            def loss_fn():
                latent = self.network.encode(params, observations)
                log_probs = ops.gather(self.network.q_log_probs(params, observations), actions)
                prediction = self.network.spr_rollout(params, latent, np.array([[0, 1], [2, 0]]))[-1]
                return ops.add(ops.reduce_sum(log_probs),
                               ops.reduce_sum(ops.mul(prediction, ops.as_tensor(weights))))

            probed = {name: params[name] for name in (
                'encoder.stage0.conv.weight', 'encoder.stage2.block1.conv1.weight',
                'head.advantage.out.weight', 'head.value.hidden.bias',
                'transition.conv0.weight', 'prediction.out.weight',
            )}
            errors = check_gradients(loss_fn, probed, max_probes=8)
        for name, error in errors.items():
            self.assertLess(error, 1e-4, name)


class TestActionSelection(unittest.TestCase):
    """Epsilon-greedy selection from the target parameters."""

    def setUp(self):
        self.bundle = create_bundle(tiny_spec(), seed=5)
        self.observation = np.random.default_rng(3).random((4, 6, 6))

    def test_greedy_uses_target_parameters(self):
        q = self.bundle.network.q_values(self.bundle.target, self.observation[None])
        action = select_action(self.bundle, self.observation, 0.0, np.random.default_rng(0))
        self.assertEqual(action, int(np.argmax(q[0])))

    def test_random_actions_cover_the_action_set(self):
        rng = np.random.default_rng(0)
        actions = {select_action(self.bundle, self.observation, 1.0, rng) for _ in range(60)}
        self.assertEqual(actions, {0, 1, 2})

    def test_logit_shift_keeps_greedy_action(self):
        with precision('float64'):
            bundle = create_bundle(tiny_spec(), seed=5)
            rng = np.random.default_rng(7)
            observations = rng.random((20, 4, 6, 6))
            before = [select_action(bundle, obs, 0.0, rng) for obs in observations]
            bundle.target['head.value.out.bias'].data += 4.2
            after = [select_action(bundle, obs, 0.0, rng) for obs in observations]
        self.assertEqual(after, before)

    def test_uniform_exploration_frequencies(self):
        rng = np.random.default_rng(0)
        draws = 10_000
        counts = np.bincount([select_action(self.bundle, self.observation, 1.0, rng) for _ in range(draws)],
                             minlength=3)
        expected = draws / 3
        sigma = np.sqrt(draws * (1 / 3) * (2 / 3))
        for count in counts:
            self.assertLess(abs(count - expected), 3 * sigma)

    def test_invalid_epsilon(self):
        with self.assertRaises(ValueError):
            select_action(self.bundle, self.observation, 1.5, np.random.default_rng(0))


class TestResets(unittest.TestCase):
    """Shrink-and-perturb, hard resets and the EMA target."""

    def setUp(self):
        self.spec = tiny_spec()
        self.bundle = create_bundle(self.spec, seed=0)
        self.template = draw_template(self.spec, seed=99)

    def test_layer_policy(self):
        policy = LayerPolicy()
        self.assertEqual(policy.classify('encoder.stage0.conv.weight'), PERTURB)
        self.assertEqual(policy.classify('transition.conv1.bias'), PERTURB)
        self.assertEqual(policy.classify('head.value.out.weight'), RESET)
        self.assertEqual(LayerPolicy([('head.', RESET)]).classify('encoder.x'), KEEP)
        with self.assertRaises(ValueError):
            LayerPolicy([('', 'scramble')])

    def test_half_perturb_is_midpoint_and_heads_are_replaced(self):
        before = self.bundle.online.copy()
        result = shrink_and_perturb(self.bundle.online, self.template, 0.5)
        for name, tensor in result.items():
            if name.startswith(('encoder.', 'transition.')):
                expected = 0.5 * before[name].data + 0.5 * self.template[name].data
            else:
                expected = self.template[name].data
            np.testing.assert_allclose(tensor.data, expected, rtol=1e-6, atol=1e-7, err_msg=name)
        self.assertEqual(parameter_distance(before, self.bundle.online), 0.0)

    def test_zero_alpha_keeps_encoder(self):
        result = shrink_and_perturb(self.bundle.online, self.template, 0.0)
        np.testing.assert_array_equal(result['encoder.stage1.conv.weight'].data,
                                      self.bundle.online['encoder.stage1.conv.weight'].data)

    def test_hard_reset_is_template(self):
        result = hard_reset(self.bundle.online, self.template)
        self.assertEqual(parameter_distance(result, self.template), 0.0)

    def test_alpha_out_of_range(self):
        with self.assertRaises(ValueError):
            shrink_and_perturb(self.bundle.online, self.template, 1.5)

    def test_ema_update(self):
        target_before = self.bundle.target.copy()
        self.bundle.online.assign(self.template)
        ema_update(self.bundle, 1.0)
        self.assertEqual(parameter_distance(self.bundle.target, target_before), 0.0)
        ema_update(self.bundle, 0.5)
        name = 'head.value.out.weight'
        np.testing.assert_allclose(self.bundle.target[name].data,
                                   0.5 * target_before[name].data + 0.5 * self.template[name].data,
                                   rtol=1e-6, atol=1e-7)
        ema_update(self.bundle, 0.0)
        self.assertEqual(parameter_distance(self.bundle.target, self.template), 0.0)

    def test_ema_rejects_bad_tau(self):
        with self.assertRaises(ValueError):
            ema_update(self.bundle, -0.1)


if __name__ == '__main__':
    unittest.main()
