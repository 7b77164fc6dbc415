use super::node::{local_updates, NodeState};
use super::oracle::GradientOracle;
use crate::connectivity::UavLinkVector;
use crate::rng::Streams;
use crate::{Error, Result};

/// One round with the UAV acting as parameter server: every node takes its
/// local step, linked nodes upload, the server averages the uploads and
/// pushes the result back to the linked nodes only. No ground gossip.
pub fn federated_round<O: GradientOracle>(
    server: &mut Vec<f64>,
    nodes: &mut [NodeState],
    oracles: &[O],
    links: &UavLinkVector,
    stragglers: &[bool],
    round: usize,
    streams: &Streams,
) -> Result<()> {
    if links.len() != nodes.len() {
        return Err(Error::shape(nodes.len(), links.len()));
    }
    local_updates(nodes, oracles, stragglers, round, streams)?;
    aggregate_uploads(server, nodes, links)
}

/// Upload/average/broadcast step of [`federated_round`].
pub fn aggregate_uploads(
    server: &mut Vec<f64>,
    nodes: &mut [NodeState],
    links: &UavLinkVector,
) -> Result<()> {
    if links.len() != nodes.len() {
        return Err(Error::shape(nodes.len(), links.len()));
    }
    let linked: Vec<usize> = (0..nodes.len()).filter(|&i| links.get(i)).collect();
    if linked.is_empty() {
        return Ok(());
    }
    let d = server.len();
    let mut mean = vec![0.0; d];
    for &i in &linked {
        if nodes[i].params.len() != d {
            return Err(Error::shape(d, nodes[i].params.len()));
        }
        for (m, x) in mean.iter_mut().zip(&nodes[i].params) {
            *m += x;
        }
    }
    let n = linked.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    *server = mean;
    for &i in &linked {
        nodes[i].params.clone_from(server);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learning::node::LrSchedule;
    use crate::learning::oracle::QuadraticOracle;

    fn setup(params: &[f64]) -> (Vec<NodeState>, Vec<QuadraticOracle>) {
        let nodes = params
            .iter()
            .map(|&p| NodeState::new(vec![p], 0.0, 0, LrSchedule::default()).unwrap())
            .collect();
        // each node sits on its own optimum, so local steps are no-ops
        let oracles =
            QuadraticOracle::family(params.iter().map(|&p| vec![p]).collect(), 0.0).unwrap();
        (nodes, oracles)
    }

    fn params(nodes: &[NodeState]) -> Vec<f64> {
        nodes.iter().map(|n| n.params[0]).collect()
    }

    #[test]
    fn no_links_leaves_server() {
        let (mut nodes, oracles) = setup(&[1.0, 2.0, 3.0]);
        let mut server = vec![9.0];
        let streams = Streams::new(0);
        federated_round(
            &mut server,
            &mut nodes,
            &oracles,
            &UavLinkVector::none(3),
            &[false; 3],
            0,
            &streams,
        )
        .unwrap();
        assert_eq!(server, vec![9.0]);
        assert_eq!(params(&nodes), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn all_linked_average() {
        let (mut nodes, oracles) = setup(&[1.0, 2.0, 6.0]);
        let mut server = vec![0.0];
        let links = UavLinkVector::new(vec![true; 3]);
        federated_round(
            &mut server,
            &mut nodes,
            &oracles,
            &links,
            &[false; 3],
            0,
            &Streams::new(0),
        )
        .unwrap();
        assert_eq!(server, vec![3.0]);
        assert_eq!(params(&nodes), vec![3.0; 3]);
    }

    #[test]
    fn single_upload() {
        let (mut nodes, oracles) = setup(&[1.0, 2.0, 6.0]);
        let mut server = vec![0.0];
        let links = UavLinkVector::new(vec![false, true, false]);
        federated_round(
            &mut server,
            &mut nodes,
            &oracles,
            &links,
            &[false; 3],
            0,
            &Streams::new(0),
        )
        .unwrap();
        assert_eq!(server, vec![2.0]);
        assert_eq!(params(&nodes), vec![1.0, 2.0, 6.0]);
    }
}
