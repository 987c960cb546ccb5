import type { HierarchyNode, Protocol } from './types.js';

function isOnPath(nodeId: string, currentId: string | null): boolean {
  if (!currentId) return false;
  return currentId === nodeId || currentId.startsWith(nodeId + '-');
}

function renderNode(
  node: HierarchyNode,
  protocol: Protocol,
  currentId: string | null,
): HTMLElement {
  const label = document.createElement('span');
  label.className = 'tree-name';
  label.textContent = node.name;
  label.dataset.nodeId = node.id;
  if (protocol === 'C' && node.differentia) {
    // visual-property text appears on hover only; names stay the visible tree
    label.title = node.differentia;
  }
  if (isOnPath(node.id, currentId)) label.classList.add('on-path');
  if (node.id === currentId) label.classList.add('current');

  if (node.children.length === 0) {
    const leaf = document.createElement('div');
    leaf.className = 'tree-leaf';
    leaf.appendChild(label);
    return leaf;
  }

  const branch = document.createElement('details');
  branch.className = 'tree-branch';
  if (isOnPath(node.id, currentId)) branch.open = true;
  const summary = document.createElement('summary');
  summary.appendChild(label);
  branch.appendChild(summary);
  const childList = document.createElement('div');
  childList.className = 'tree-children';
  for (const child of node.children) {
    childList.appendChild(renderNode(child, protocol, currentId));
  }
  branch.appendChild(childList);
  return branch;
}

/**
 * Collapsible hierarchy tree. Branches on the path to ``currentId`` start
 * open and their names are highlighted; the asked-about node itself is
 * marked ``current``.
 */
export function renderTree(
  roots: HierarchyNode[],
  protocol: Protocol,
  currentId: string | null,
): HTMLElement {
  const container = document.createElement('div');
  container.className = 'tree';
  for (const root of roots) {
    container.appendChild(renderNode(root, protocol, currentId));
  }
  return container;
}
